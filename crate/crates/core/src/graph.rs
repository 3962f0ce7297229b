//! Directed interaction topology: leader/follower partitioning, subgraph
//! extraction, structural validation, and Laplacian block construction.
//!
//! An edge `(j, i)` means agent `i` reads agent `j`'s state; a *leader* is an
//! agent with an empty in-neighbour set, every other agent is a *follower*.
//! Edges never connect an agent to itself: self-influence is carried by the
//! diagonal of a weight matrix, not by the edge set.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Directed graph over agents `0..n` with optional nonnegative edge weights.
///
/// Unweighted graphs report weight `1.0` on every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    n: usize,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
    weights: Option<BTreeMap<(usize, usize), f64>>,
}

impl DiGraph {
    /// Build an unweighted graph from `(src, dst)` edges.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::build(n, edges.iter().map(|&(s, d)| (s, d, None)))
    }

    /// Build a weighted graph from `(src, dst, weight)` edges.
    pub fn with_weights(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        Self::build(n, edges.iter().map(|&(s, d, w)| (s, d, Some(w))))
    }

    fn build(n: usize, edges: impl Iterator<Item = (usize, usize, Option<f64>)>) -> Result<Self> {
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut any_weight = false;
        for (src, dst, w) in edges {
            if src >= n || dst >= n {
                return Err(Error::EdgeOutOfRange { src, dst, n });
            }
            if src == dst {
                return Err(Error::SelfLoop(src));
            }
            if weights.contains_key(&(src, dst)) {
                return Err(Error::DuplicateEdge { src, dst });
            }
            let w = match w {
                Some(w) => {
                    any_weight = true;
                    if !w.is_finite() || w < 0.0 {
                        return Err(Error::NegativeWeight {
                            src,
                            dst,
                            weight: w,
                        });
                    }
                    w
                }
                None => 1.0,
            };
            weights.insert((src, dst), w);
            out[src].push(dst);
            inn[dst].push(src);
        }
        for list in out.iter_mut().chain(inn.iter_mut()) {
            list.sort_unstable();
        }
        Ok(DiGraph {
            n,
            out,
            inn,
            weights: any_weight.then_some(weights),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.out[src].binary_search(&dst).is_ok()
    }

    /// Agents whose state `i` reads.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.inn[i]
    }

    /// Agents that read `j`'s state; `out_degree(j)` is this set's size.
    pub fn out_neighbors(&self, j: usize) -> &[usize] {
        &self.out[j]
    }

    pub fn out_degree(&self, j: usize) -> usize {
        self.out[j].len()
    }

    /// Weight of edge `(src, dst)`; 1.0 when the graph is unweighted.
    pub fn weight(&self, src: usize, dst: usize) -> f64 {
        match &self.weights {
            Some(map) => map.get(&(src, dst)).copied().unwrap_or(0.0),
            None => {
                if self.has_edge(src, dst) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// All edges as `(src, dst)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .out
            .iter()
            .enumerate()
            .flat_map(|(s, ds)| ds.iter().map(move |&d| (s, d)))
            .collect();
        e.sort_unstable();
        e
    }
}

/// Leader/follower split of a graph, with global-to-block index maps.
///
/// Block indices order leaders and followers by ascending global index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    leaders: Vec<usize>,
    followers: Vec<usize>,
    follower_block: Vec<Option<usize>>,
    leader_block: Vec<Option<usize>>,
}

impl Partition {
    pub fn leaders(&self) -> &[usize] {
        &self.leaders
    }

    pub fn followers(&self) -> &[usize] {
        &self.followers
    }

    pub fn leader_count(&self) -> usize {
        self.leaders.len()
    }

    pub fn follower_count(&self) -> usize {
        self.followers.len()
    }

    pub fn is_leader(&self, agent: usize) -> bool {
        self.leader_block[agent].is_some()
    }

    /// Block index of a follower within the follower ordering.
    pub fn follower_block(&self, agent: usize) -> Option<usize> {
        self.follower_block[agent]
    }

    /// Block index of a leader within the leader ordering.
    pub fn leader_block(&self, agent: usize) -> Option<usize> {
        self.leader_block[agent]
    }
}

/// Split agents into leaders (empty in-neighbour set) and followers.
pub fn partition_agents(g: &DiGraph) -> Partition {
    let mut leaders = Vec::new();
    let mut followers = Vec::new();
    let mut follower_block = vec![None; g.n()];
    let mut leader_block = vec![None; g.n()];
    for agent in 0..g.n() {
        if g.in_neighbors(agent).is_empty() {
            leader_block[agent] = Some(leaders.len());
            leaders.push(agent);
        } else {
            follower_block[agent] = Some(followers.len());
            followers.push(agent);
        }
    }
    Partition {
        leaders,
        followers,
        follower_block,
        leader_block,
    }
}

/// Subgraph induced by the followers, on follower block indices.
///
/// Edge weights carry over when the parent graph is weighted.
pub fn follower_subgraph(g: &DiGraph, p: &Partition) -> DiGraph {
    let weighted = g.weights.is_some();
    let mut edges = Vec::new();
    for (&src, sb) in p.followers.iter().zip(0..) {
        for &dst in g.out_neighbors(src) {
            if let Some(db) = p.follower_block(dst) {
                edges.push((sb, db, g.weight(src, dst)));
            }
        }
    }
    let q = p.follower_count();
    if weighted {
        DiGraph::with_weights(q, &edges).expect("follower subgraph inherits validity")
    } else {
        let unweighted: Vec<(usize, usize)> = edges.iter().map(|&(s, d, _)| (s, d)).collect();
        DiGraph::new(q, &unweighted).expect("follower subgraph inherits validity")
    }
}

/// Exactly the leader-to-follower edges, as global `(leader, follower)` pairs.
pub fn leader_follower_edges(g: &DiGraph, p: &Partition) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for &leader in p.leaders() {
        for &dst in g.out_neighbors(leader) {
            if !p.is_leader(dst) {
                edges.push((leader, dst));
            }
        }
    }
    edges.sort_unstable();
    edges
}

fn reachable_count(n: usize, adj: &[Vec<usize>], start: usize) -> usize {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count
}

/// True iff every ordered vertex pair is joined by a directed path.
///
/// A single vertex is strongly connected; the empty graph is not a graph of
/// agents we accept elsewhere, but reports `true` vacuously.
pub fn is_strongly_connected(g: &DiGraph) -> bool {
    if g.n() <= 1 {
        return true;
    }
    reachable_count(g.n(), &g.out, 0) == g.n() && reachable_count(g.n(), &g.inn, 0) == g.n()
}

/// Longest shortest directed path, via all-pairs BFS.
pub fn diameter(g: &DiGraph) -> Result<usize> {
    if !is_strongly_connected(g) {
        return Err(Error::NotStronglyConnected);
    }
    let mut diam = 0;
    let mut dist = vec![0usize; g.n()];
    let mut queue = std::collections::VecDeque::new();
    for s in 0..g.n() {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in g.out_neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        diam = diam.max(dist.iter().copied().max().unwrap_or(0));
    }
    Ok(diam)
}

/// Outcome of one structural check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub pass: bool,
    pub detail: String,
}

/// Pass/fail report for the three structural assumptions: (a) at least one
/// leader, (b) every leader feeds at least one follower, (c) the follower
/// subgraph is strongly connected.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub leaders_exist: Clause,
    pub leaders_feed_followers: Clause,
    pub followers_strongly_connected: Clause,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.leaders_exist.pass
            && self.leaders_feed_followers.pass
            && self.followers_strongly_connected.pass
    }

    pub fn clauses(&self) -> [(&'static str, &Clause); 3] {
        [
            ("(a) leaders exist", &self.leaders_exist),
            ("(b) every leader feeds a follower", &self.leaders_feed_followers),
            ("(c) follower subgraph strongly connected", &self.followers_strongly_connected),
        ]
    }
}

/// Check the leader/follower structure a run requires; failures are reported,
/// not raised, so a front end can print every violation at once.
pub fn validate_assumptions(g: &DiGraph, p: &Partition) -> ValidationReport {
    let m = p.leader_count();
    let leaders_exist = Clause {
        pass: m >= 1,
        detail: format!("{m} leader(s) found"),
    };
    let isolated: Vec<usize> = p
        .leaders()
        .iter()
        .copied()
        .filter(|&l| !g.out_neighbors(l).iter().any(|&d| !p.is_leader(d)))
        .collect();
    let leaders_feed_followers = Clause {
        pass: m >= 1 && isolated.is_empty(),
        detail: if isolated.is_empty() {
            "every leader has a follower out-edge".to_string()
        } else {
            format!("leaders without follower out-edges: {isolated:?}")
        },
    };
    let gf = follower_subgraph(g, p);
    let sc = p.follower_count() >= 1 && is_strongly_connected(&gf);
    let followers_strongly_connected = Clause {
        pass: sc,
        detail: if sc {
            format!("{} followers, strongly connected", p.follower_count())
        } else {
            format!("{} followers, not strongly connected", p.follower_count())
        },
    };
    ValidationReport {
        leaders_exist,
        leaders_feed_followers,
        followers_strongly_connected,
    }
}

/// Follower rows of the weighted Laplacian, split into the follower-follower
/// block `L1` and the leader-follower block `L2`.
///
/// Row sums of `[L1 L2]` are zero by construction: each diagonal entry is the
/// sum of the same weight values that appear negated off the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBlocks {
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
}

/// Build `L1`, `L2` from the graph's weights (1.0 on every edge when
/// unweighted).
pub fn laplacian_blocks(g: &DiGraph, p: &Partition) -> Result<LaplacianBlocks> {
    let q = p.follower_count();
    let m = p.leader_count();
    let mut l1 = DMatrix::zeros(q, q);
    let mut l2 = DMatrix::zeros(q, m);
    for (&agent, fb) in p.followers().iter().zip(0..) {
        let mut degree = 0.0;
        for &src in g.in_neighbors(agent) {
            let w = g.weight(src, agent);
            if w < 0.0 {
                return Err(Error::NegativeWeight {
                    src,
                    dst: agent,
                    weight: w,
                });
            }
            degree += w;
            match p.follower_block(src) {
                Some(sb) => l1[(fb, sb)] = -w,
                None => {
                    let lb = p.leader_block(src).expect("non-follower is a leader");
                    l2[(fb, lb)] = -w;
                }
            }
        }
        l1[(fb, fb)] = degree;
    }
    Ok(LaplacianBlocks { l1, l2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_cycle() -> DiGraph {
        DiGraph::new(3, &[(0, 1), (1, 2), (2, 0)]).unwrap()
    }

    #[test]
    fn partition_cycle_has_no_leaders() {
        let g = three_cycle();
        let p = partition_agents(&g);
        assert!(p.leaders().is_empty());
        assert_eq!(p.followers(), &[0, 1, 2]);
    }

    #[test]
    fn partition_detects_source_node() {
        // edges 3->1, 1->2, 2->1 on agents {1,2,3} (0 unused is not allowed; use 0-based)
        let g = DiGraph::new(3, &[(2, 0), (0, 1), (1, 0)]).unwrap();
        let p = partition_agents(&g);
        assert_eq!(p.leaders(), &[2]);
        assert_eq!(p.followers(), &[0, 1]);
        assert_eq!(p.follower_block(1), Some(1));
        assert_eq!(p.leader_block(2), Some(0));
    }

    #[test]
    fn adding_an_in_edge_never_enlarges_leader_set() {
        let g = DiGraph::new(3, &[(2, 0), (0, 1)]).unwrap();
        let before = partition_agents(&g).leader_count();
        let g2 = DiGraph::new(3, &[(2, 0), (0, 1), (1, 2)]).unwrap();
        let after = partition_agents(&g2).leader_count();
        assert!(after <= before);
    }

    #[test]
    fn follower_subgraph_drops_leader_edges() {
        let g = DiGraph::new(3, &[(0, 1), (1, 0), (2, 0)]).unwrap();
        let p = partition_agents(&g);
        let gf = follower_subgraph(&g, &p);
        assert_eq!(gf.n(), 2);
        assert_eq!(gf.edges(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn follower_subgraph_identity_when_no_leaders() {
        let g = three_cycle();
        let p = partition_agents(&g);
        let gf = follower_subgraph(&g, &p);
        assert_eq!(gf.edges(), g.edges());
    }

    #[test]
    fn leader_follower_edges_exact() {
        let g = DiGraph::new(3, &[(2, 0), (0, 1)]).unwrap();
        let p = partition_agents(&g);
        assert_eq!(leader_follower_edges(&g, &p), vec![(2, 0)]);

        let g2 = three_cycle();
        let p2 = partition_agents(&g2);
        assert!(leader_follower_edges(&g2, &p2).is_empty());
    }

    #[test]
    fn strong_connectivity_basics() {
        assert!(is_strongly_connected(&three_cycle()));
        let broken = DiGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(!is_strongly_connected(&broken));
        let two_cycles = DiGraph::new(4, &[(0, 1), (1, 0), (2, 3), (3, 2)]).unwrap();
        assert!(!is_strongly_connected(&two_cycles));
        assert!(is_strongly_connected(&DiGraph::new(1, &[]).unwrap()));
    }

    #[test]
    fn diameter_values() {
        assert_eq!(diameter(&three_cycle()).unwrap(), 2);
        let mut complete = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    complete.push((i, j));
                }
            }
        }
        assert_eq!(diameter(&DiGraph::new(4, &complete).unwrap()).unwrap(), 1);
        let five_cycle = DiGraph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        assert_eq!(diameter(&five_cycle).unwrap(), 4);
        assert!(diameter(&DiGraph::new(2, &[(0, 1)]).unwrap()).is_err());
    }

    #[test]
    fn validation_flags_isolated_leader() {
        // leader 2 has no out-edges at all
        let g = DiGraph::new(3, &[(0, 1), (1, 0)]).unwrap();
        let p = partition_agents(&g);
        let report = validate_assumptions(&g, &p);
        assert!(report.leaders_exist.pass);
        assert!(!report.leaders_feed_followers.pass);
        assert!(!report.pass());
    }

    #[test]
    fn validation_flags_disconnected_followers() {
        let g = DiGraph::new(5, &[(4, 0), (4, 2), (0, 1), (1, 0), (2, 3), (3, 2)]).unwrap();
        let p = partition_agents(&g);
        let report = validate_assumptions(&g, &p);
        assert!(report.leaders_exist.pass);
        assert!(report.leaders_feed_followers.pass);
        assert!(!report.followers_strongly_connected.pass);
    }

    #[test]
    fn laplacian_blocks_hand_instance() {
        // followers 0,1 mutually connected (weight 1), each hearing one leader (weight 1):
        // L1 = [[2,-1],[-1,2]], L2 = -I
        let g = DiGraph::new(4, &[(0, 1), (1, 0), (2, 0), (3, 1)]).unwrap();
        let p = partition_agents(&g);
        let lb = laplacian_blocks(&g, &p).unwrap();
        assert_eq!(lb.l1, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        assert_eq!(lb.l2, DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn laplacian_no_leader_edges_means_zero_l2() {
        let g = three_cycle();
        let p = partition_agents(&g);
        let lb = laplacian_blocks(&g, &p).unwrap();
        assert_eq!(lb.l2.ncols(), 0);
        assert_eq!(lb.l1.row_sum(), DMatrix::zeros(1, 3).row_sum());
    }

    #[test]
    fn laplacian_single_pair() {
        let g = DiGraph::with_weights(2, &[(1, 0, 0.7)]).unwrap();
        let p = partition_agents(&g);
        let lb = laplacian_blocks(&g, &p).unwrap();
        assert_eq!(lb.l1[(0, 0)], 0.7);
        assert_eq!(lb.l2[(0, 0)], -0.7);
    }

    #[test]
    fn laplacian_rows_sum_to_zero_exactly_for_dyadic_weights() {
        // weights are multiples of 1/1024, so accumulation is exact
        let g = DiGraph::with_weights(
            4,
            &[
                (0, 1, 3.0 / 1024.0),
                (1, 0, 5.0 / 1024.0),
                (2, 0, 100.0 / 1024.0),
                (2, 1, 7.0 / 1024.0),
                (3, 1, 1.0 / 1024.0),
            ],
        )
        .unwrap();
        let p = partition_agents(&g);
        let lb = laplacian_blocks(&g, &p).unwrap();
        for r in 0..lb.l1.nrows() {
            let total: f64 = lb.l1.row(r).iter().sum::<f64>() + lb.l2.row(r).iter().sum::<f64>();
            assert_eq!(total, 0.0);
        }
    }

    #[test]
    fn graph_construction_errors() {
        assert!(matches!(
            DiGraph::new(2, &[(0, 0)]),
            Err(Error::SelfLoop(0))
        ));
        assert!(matches!(
            DiGraph::new(2, &[(0, 3)]),
            Err(Error::EdgeOutOfRange { .. })
        ));
        assert!(matches!(
            DiGraph::new(2, &[(0, 1), (0, 1)]),
            Err(Error::DuplicateEdge { .. })
        ));
        assert!(matches!(
            DiGraph::with_weights(2, &[(0, 1, -0.5)]),
            Err(Error::NegativeWeight { .. })
        ));
    }
}
