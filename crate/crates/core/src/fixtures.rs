//! The bundled demonstration network: 24 agents, 10 stationary leaders, 14
//! followers on a strongly connected digraph of out-degree 2 and diameter 4.
//!
//! Leaders come in antipodal pairs (pair states sum to twice the global
//! average) and each pair feeds one shared gateway follower, so the leader
//! injection carries no spread and trajectories show the protocol's geometric
//! transient cleanly. The leaders' average is (5, 4.5) in the two state
//! dimensions.

use nalgebra::DMatrix;

use crate::graph::DiGraph;
use crate::harness::{sha256_hex, ScenarioConfig};

/// Follower-to-follower edges on follower indices 0..14: a ring plus one
/// chord per node.
pub fn bundled_follower_edges() -> Vec<(usize, usize)> {
    let chords = [11, 6, 13, 12, 9, 0, 4, 1, 6, 12, 5, 4, 2, 8];
    let mut edges = Vec::with_capacity(28);
    for i in 0..14 {
        edges.push((i, (i + 1) % 14));
        edges.push((i, chords[i]));
    }
    edges
}

/// Gateway follower fed by each antipodal leader pair.
pub const BUNDLED_GATEWAYS: [usize; 5] = [0, 3, 6, 9, 12];

/// The full 24-agent interaction graph: followers 0..14, leaders 14..24.
pub fn bundled_graph() -> DiGraph {
    let mut edges = bundled_follower_edges();
    for pair in 0..5 {
        let gateway = BUNDLED_GATEWAYS[pair];
        edges.push((14 + pair, gateway));
        edges.push((14 + pair + 5, gateway));
    }
    DiGraph::new(24, &edges).expect("bundled graph is well-formed")
}

/// Leader states in block order (leaders 14..24), one row per leader and one
/// column per state dimension; averages to (5, 4.5).
pub fn bundled_leader_states() -> DMatrix<f64> {
    let x1 = [5.0, 3.0, 2.0, 2.0, 3.0, 5.0, 7.0, 8.0, 8.0, 7.0];
    let x2 = [1.0, 2.0, 4.0, 5.0, 7.0, 8.0, 7.0, 5.0, 4.0, 2.0];
    DMatrix::from_fn(10, 2, |r, c| if c == 0 { x1[r] } else { x2[r] })
}

/// A hand-built column-stochastic weight block on the bundled follower
/// graph: every sender keeps 1/2 and splits 1/2 over its two out-edges. All
/// entries are dyadic, so column sums are exactly one.
pub fn bundled_reference_a1() -> DMatrix<f64> {
    let mut a1 = DMatrix::zeros(14, 14);
    for (src, dst) in bundled_follower_edges() {
        a1[(dst, src)] = 0.25;
    }
    for i in 0..14 {
        a1[(i, i)] = 0.5;
    }
    a1
}

/// Ready-to-run scenario over the bundled network.
pub fn bundled_scenario() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(bundled_graph(), bundled_leader_states());
    cfg.config_hash = sha256_hex(b"bundled-24-agent-scenario");
    cfg
}
