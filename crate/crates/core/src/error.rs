//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by graph construction, linear-algebra kernels, protocol
/// validation, and the optimization drivers.
#[derive(Debug, Error)]
pub enum Error {
    // --- graph ---
    #[error("edge ({src}, {dst}) out of range for {n} agents")]
    EdgeOutOfRange { src: usize, dst: usize, n: usize },
    #[error("self-loop ({0}, {0}) is not a valid edge; self-influence lives on the weight-matrix diagonal")]
    SelfLoop(usize),
    #[error("duplicate edge ({src}, {dst})")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("negative weight {weight} on edge ({src}, {dst})")]
    NegativeWeight { src: usize, dst: usize, weight: f64 },
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("{0}")]
    InvalidPartition(String),

    // --- matrixops ---
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix entries must be finite")]
    NonFiniteEntry,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigen/singular solver did not converge within {0} iterations")]
    IterationCap(usize),
    #[error("matrix is singular or ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    // --- weights / projection ---
    #[error("sparsity pattern row {0} has no allowed entries")]
    EmptyPatternRow(usize),
    #[error("sparsity pattern column {0} has no allowed entries")]
    EmptyPatternColumn(usize),
    #[error("pattern admits no doubly stochastic matrix (projection residual {residual:.3e})")]
    PatternInfeasible { residual: f64 },
    #[error("WBA self-weight went negative at agent {agent} (1 - d_i v_i = {value:.3e}); initial node weights too large")]
    NegativeSelfWeight { agent: usize, value: f64 },

    // --- containment ---
    #[error("weight matrix rejected: {0}")]
    InvalidWeightMatrix(String),
    #[error("push-sum weight w_{agent} became non-positive ({value:.3e}) at iteration {iteration}")]
    NonPositivePushSumWeight { agent: usize, value: f64, iteration: usize },
    #[error("no leaders: cannot average an empty leader set")]
    NoLeaders,
    #[error("eigenvalue with non-positive real part {0:.3e}; step-size bound undefined")]
    NonPositiveEigenvalue(f64),
    #[error("trajectory has too few informative points for a rate fit ({0} found, 10 required)")]
    RateWindowTooShort(usize),

    // --- admm ---
    #[error("inner consensus self-weight 1 - d_i v_i = {value:.3e} < 0 at agent {agent}; node-weight initialization too large")]
    InnerSelfWeightNegative { agent: usize, value: f64 },
    #[error("H must be at least 1")]
    InvalidInnerRounds,

    // --- harness ---
    #[error("locality violation: agent {reader} read a payload from non-in-neighbour {sender}")]
    LocalityViolation { reader: usize, sender: usize },
    #[error("agent {reader} expected a message from in-neighbour {sender} but none arrived")]
    MissingMessage { reader: usize, sender: usize },
    #[error("message target {dst} is not an out-neighbour of sender {src}")]
    InvalidMessageTarget { src: usize, dst: usize },
    #[error("scenario invalid: {0}")]
    InvalidScenario(String),
    #[error("pipeline stage `{stage}` failed: {source}")]
    PipelineStage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Tag an error with the pipeline stage it surfaced in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::PipelineStage {
            stage,
            source: Box::new(self),
        }
    }
}
