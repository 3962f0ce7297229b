//! Simulator and weight-design toolkit for discrete-time multi-agent
//! containment control on directed graphs.
//!
//! Followers reach consensus at the average of stationary leaders' states via
//! a push-sum protocol ([`containment`]), and the interaction weights are
//! optimized for fastest convergence both centrally ([`weights`]) and with a
//! fully distributed ADMM scheme ([`admm`]). A round-synchronous harness
//! ([`harness`]) enforces message locality and drives full scenario
//! pipelines.

pub mod admm;
pub mod containment;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod harness;
pub mod matrixops;
pub mod weights;

pub use error::{Error, Result};
