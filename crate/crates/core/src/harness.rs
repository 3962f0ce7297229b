//! Round-synchronous message-passing substrate and the scenario pipeline.
//!
//! Within a round every agent first emits payloads addressed to its
//! out-neighbours, then updates from its own state and its inbox alone. The
//! inbox refuses reads from non-in-neighbours, so an update function cannot
//! peek at a stranger's state; targeting a non-out-neighbour on send is
//! rejected the same way. Delivery order within a round is unobservable:
//! inboxes iterate in sender order.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admm::{run_admm, AdmmConfig, AdmmOutcome};
use crate::containment::{
    convergence_rate, empirical_rate, leaders_average, run_laplacian_containment, run_push_sum,
    RecordOptions, Trajectory, WeightMatrix,
};
use crate::error::{Error, Result};
use crate::graph::{
    laplacian_blocks, partition_agents, validate_assumptions, DiGraph, Partition,
};
use crate::weights::{
    objective, solve_centralized, wba_weights, CentralizedConfig, SparsityPattern,
};

/// Messages delivered to one agent for the current round, keyed by sender.
#[derive(Debug, Clone)]
pub struct Inbox<M> {
    reader: usize,
    in_neighbors: Vec<usize>,
    messages: BTreeMap<usize, M>,
}

impl<M> Inbox<M> {
    fn new(reader: usize, g: &DiGraph) -> Self {
        Inbox {
            reader,
            in_neighbors: g.in_neighbors(reader).to_vec(),
            messages: BTreeMap::new(),
        }
    }

    /// Payload from in-neighbour `sender`; reading anyone else is a locality
    /// violation.
    pub fn from_neighbor(&self, sender: usize) -> Result<&M> {
        if self.in_neighbors.binary_search(&sender).is_err() {
            return Err(Error::LocalityViolation {
                reader: self.reader,
                sender,
            });
        }
        self.messages.get(&sender).ok_or(Error::MissingMessage {
            reader: self.reader,
            sender,
        })
    }

    /// All delivered payloads in ascending sender order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &M)> {
        self.messages.iter().map(|(&s, m)| (s, m))
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Advance every agent one synchronous round.
///
/// `emit` runs first on each agent's current state and addresses payloads to
/// out-neighbours; `update` then maps `(agent, state, inbox)` to the next
/// state. Returns the new states and the number of messages delivered.
pub fn synchronous_step<S, M>(
    g: &DiGraph,
    states: &[S],
    emit: impl Fn(usize, &S) -> Vec<(usize, M)>,
    update: impl Fn(usize, &S, &Inbox<M>) -> Result<S>,
) -> Result<(Vec<S>, usize)> {
    let n = g.n();
    assert_eq!(states.len(), n, "one state per agent");
    let mut inboxes: Vec<Inbox<M>> = (0..n).map(|i| Inbox::new(i, g)).collect();
    let mut delivered = 0usize;
    for (src, state) in states.iter().enumerate() {
        for (dst, payload) in emit(src, state) {
            if !g.has_edge(src, dst) {
                return Err(Error::InvalidMessageTarget { src, dst });
            }
            inboxes[dst].messages.insert(src, payload);
            delivered += 1;
        }
    }
    let mut next = Vec::with_capacity(n);
    for (i, state) in states.iter().enumerate() {
        next.push(update(i, state, &inboxes[i])?);
    }
    Ok((next, delivered))
}

/// Per-agent push-sum state as carried by the harness (block indices are the
/// partition's).
#[derive(Debug, Clone)]
pub struct PushSumAgent {
    pub s: Vec<f64>,
    pub w: f64,
    pub x: Vec<f64>,
    pub is_leader: bool,
}

/// One push-sum round through mailboxes. Each sender scales its `(s, w)` by
/// its out-weight toward every out-neighbour; followers sum their retained
/// share and the received ones. Agrees with the matrix-form round to machine
/// precision and delivers exactly one message per edge.
pub fn push_sum_round_via_harness(
    g: &DiGraph,
    p: &Partition,
    w: &WeightMatrix,
    agents: &[PushSumAgent],
) -> Result<(Vec<PushSumAgent>, usize)> {
    let weight_from = |src: usize, dst: usize| -> f64 {
        let db = p.follower_block(dst).expect("only followers receive");
        match p.follower_block(src) {
            Some(sb) => w.a1()[(db, sb)],
            None => w.a2()[(db, p.leader_block(src).expect("leader"))],
        }
    };
    synchronous_step(
        g,
        agents,
        |src, state| {
            g.out_neighbors(src)
                .iter()
                .filter(|&&dst| !p.is_leader(dst))
                .map(|&dst| {
                    let a = weight_from(src, dst);
                    let shares: Vec<f64> = state.s.iter().map(|si| a * si).collect();
                    (dst, (shares, a * state.w))
                })
                .collect()
        },
        |i, state, inbox: &Inbox<(Vec<f64>, f64)>| {
            if state.is_leader {
                return Ok(state.clone());
            }
            let bi = p.follower_block(i).expect("follower");
            let retain = w.a1()[(bi, bi)];
            let mut s: Vec<f64> = vec![0.0; state.s.len()];
            let mut wsum = 0.0;
            let mut self_added = false;
            for (sender, (shares, wshare)) in inbox.iter() {
                if !self_added && sender > i {
                    for (acc, own) in s.iter_mut().zip(&state.s) {
                        *acc += retain * own;
                    }
                    wsum += retain * state.w;
                    self_added = true;
                }
                for (acc, share) in s.iter_mut().zip(shares) {
                    *acc += share;
                }
                wsum += wshare;
            }
            if !self_added {
                for (acc, own) in s.iter_mut().zip(&state.s) {
                    *acc += retain * own;
                }
                wsum += retain * state.w;
            }
            if wsum <= 0.0 {
                return Err(Error::NonPositivePushSumWeight {
                    agent: bi,
                    value: wsum,
                    iteration: 0,
                });
            }
            let x = s.iter().map(|si| si / wsum).collect();
            Ok(PushSumAgent {
                s,
                w: wsum,
                x,
                is_leader: false,
            })
        },
    )
}

/// Initialize harness agents from follower/leader state blocks.
pub fn push_sum_agents(
    p: &Partition,
    x_f0: &DMatrix<f64>,
    x_l: &DMatrix<f64>,
) -> Vec<PushSumAgent> {
    let n = p.follower_count() + p.leader_count();
    (0..n)
        .map(|agent| match p.follower_block(agent) {
            Some(b) => {
                let row: Vec<f64> = x_f0.row(b).iter().copied().collect();
                PushSumAgent {
                    s: row.clone(),
                    w: 1.0,
                    x: row,
                    is_leader: false,
                }
            }
            None => {
                let b = p.leader_block(agent).expect("leader");
                let row: Vec<f64> = x_l.row(b).iter().copied().collect();
                PushSumAgent {
                    s: row.clone(),
                    w: 1.0,
                    x: row,
                    is_leader: true,
                }
            }
        })
        .collect()
}

/// How a scenario obtains its weight matrix.
#[derive(Debug, Clone)]
pub enum OptimizerChoice {
    Admm,
    Centralized,
    Wba,
    Fixed {
        a1: DMatrix<f64>,
        a2: Option<DMatrix<f64>>,
    },
}

impl OptimizerChoice {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerChoice::Admm => "admm",
            OptimizerChoice::Centralized => "centralized",
            OptimizerChoice::Wba => "wba",
            OptimizerChoice::Fixed { .. } => "fixed",
        }
    }
}

/// Which dynamics a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Optimize (or take fixed weights), then run the push-sum protocol.
    Pipeline,
    /// Like `Pipeline`; conventional name when the weights are fixed.
    PushSum,
    /// The Laplacian containment baseline.
    Laplacian,
}

impl RunMode {
    pub fn name(&self) -> &'static str {
        match self {
            RunMode::Pipeline => "pipeline",
            RunMode::PushSum => "push_sum",
            RunMode::Laplacian => "laplacian",
        }
    }
}

/// Ingested experiment description, ready to run.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub graph: DiGraph,
    /// Leader states, one row per leader in block order, one column per
    /// state dimension.
    pub leader_states: DMatrix<f64>,
    pub mode: RunMode,
    pub optimizer: OptimizerChoice,
    pub admm: AdmmConfig,
    pub centralized: CentralizedConfig,
    pub wba_tol: f64,
    /// Successive-iterate stopping tolerance for the protocol run.
    pub gamma: f64,
    pub push_sum_max_iter: usize,
    /// Step size for the Laplacian baseline.
    pub alpha: f64,
    pub seed: u64,
    pub record: RecordOptions,
    /// Overrides the seeded follower initialization when present (block
    /// order, one column per dimension).
    pub follower_init: Option<DMatrix<f64>>,
    pub config_hash: String,
}

impl ScenarioConfig {
    pub fn new(graph: DiGraph, leader_states: DMatrix<f64>) -> Self {
        ScenarioConfig {
            graph,
            leader_states,
            mode: RunMode::Pipeline,
            optimizer: OptimizerChoice::Admm,
            admm: AdmmConfig::default(),
            centralized: CentralizedConfig::default(),
            wba_tol: 1e-12,
            gamma: 1e-10,
            push_sum_max_iter: 200_000,
            alpha: 0.25,
            seed: 0,
            record: RecordOptions::default(),
            follower_init: None,
            config_hash: String::new(),
        }
    }

    /// Validate tolerances and structural assumptions; returns the partition.
    pub fn validate(&self) -> Result<Partition> {
        if !(self.gamma >= 0.0) || !(self.wba_tol > 0.0) || !(self.admm.epsilon > 0.0) {
            return Err(Error::InvalidScenario("tolerances must be positive".into()));
        }
        let p = partition_agents(&self.graph);
        let report = validate_assumptions(&self.graph, &p);
        if !report.pass() {
            let failing: Vec<String> = report
                .clauses()
                .iter()
                .filter(|(_, c)| !c.pass)
                .map(|(name, c)| format!("{name}: {}", c.detail))
                .collect();
            return Err(Error::InvalidScenario(failing.join("; ")));
        }
        if self.leader_states.nrows() != p.leader_count() {
            return Err(Error::InvalidScenario(format!(
                "{} leader state rows for {} leaders",
                self.leader_states.nrows(),
                p.leader_count()
            )));
        }
        Ok(p)
    }
}

/// Persisted outcome of a run. Wall time is excluded from the determinism
/// guarantee; everything else is reproducible from config plus seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub method: String,
    pub converged: bool,
    pub iterations: usize,
    /// Final state per agent (global order), one inner vector per agent.
    pub final_states: Vec<Vec<f64>>,
    pub leaders_average: Vec<f64>,
    pub max_error_vs_leaders_average: Option<f64>,
    /// `||A1 - J||_2` of the weight matrix in play.
    pub objective: Option<f64>,
    /// `rho(A1 - J)` of the weight matrix in play.
    pub spectral_radius: Option<f64>,
    pub empirical_rate: Option<f64>,
    pub optimizer_iterations: Option<usize>,
    /// `max_i R_i` per outer iteration when the optimizer was ADMM.
    pub residual_trajectory: Option<Vec<f64>>,
    pub wall_time_ms: f64,
    pub config_hash: String,
    pub seed: u64,
}

/// Everything a front end needs to persist artifacts.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: RunReport,
    pub trajectory: Trajectory,
    pub partition: Partition,
    pub weights: Option<WeightMatrix>,
    pub admm: Option<AdmmOutcome>,
}

/// Hex SHA-256, used to stamp reports with the configuration they came from.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seeded follower initialization: uniform in [-1, 1], centered per
/// dimension so the sample mean carries no offset.
pub fn default_follower_init(q: usize, dims: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_fn(q, dims, |_, _| rng.random_range(-1.0..1.0));
    for c in 0..dims {
        let mean = x.column(c).sum() / q as f64;
        for r in 0..q {
            x[(r, c)] -= mean;
        }
    }
    x
}

/// Uniform column-stochastic `A2`: each leader splits unit mass over its
/// follower out-edges. With `randomize`, the split is seeded-random instead
/// of uniform. Column sums are exactly 1 (the last share is the complement
/// of the accumulated rest).
pub fn generate_a2(
    g: &DiGraph,
    p: &Partition,
    seed: u64,
    randomize: bool,
) -> Result<DMatrix<f64>> {
    let q = p.follower_count();
    let m = p.leader_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa2a2_a2a2);
    let mut a2 = DMatrix::zeros(q, m);
    for (lb, &leader) in p.leaders().iter().enumerate() {
        let targets: Vec<usize> = g
            .out_neighbors(leader)
            .iter()
            .filter_map(|&dst| p.follower_block(dst))
            .collect();
        if targets.is_empty() {
            return Err(Error::InvalidScenario(format!(
                "leader {leader} has no follower out-edges"
            )));
        }
        let raw: Vec<f64> = if randomize {
            targets.iter().map(|_| rng.random_range(0.2..1.0)).collect()
        } else {
            vec![1.0; targets.len()]
        };
        let total: f64 = raw.iter().sum();
        let mut acc = 0.0;
        for (idx, (&fb, &r)) in targets.iter().zip(&raw).enumerate() {
            let share = if idx + 1 == targets.len() {
                1.0 - acc
            } else {
                r / total
            };
            a2[(fb, lb)] = share;
            acc += share;
        }
    }
    Ok(a2)
}

fn states_to_global(p: &Partition, block: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = p.follower_count() + p.leader_count();
    let mut out = vec![Vec::new(); n];
    for (b, &agent) in p.followers().iter().enumerate() {
        out[agent] = block.row(b).iter().copied().collect();
    }
    for (b, &agent) in p.leaders().iter().enumerate() {
        out[agent] = block.row(p.follower_count() + b).iter().copied().collect();
    }
    out
}

/// Validate, optimize weights, assemble the weight matrix, run containment,
/// and report. Each stage failure is tagged with the stage name.
pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<PipelineOutcome> {
    let start = Instant::now();
    let p = cfg.validate().map_err(|e| e.in_stage("validate"))?;
    let q = p.follower_count();
    let dims = cfg.leader_states.ncols();
    let gf = crate::graph::follower_subgraph(&cfg.graph, &p);
    let pattern = SparsityPattern::from_follower_graph(&gf);

    if cfg.mode == RunMode::Laplacian {
        let l = laplacian_blocks(&cfg.graph, &p).map_err(|e| e.in_stage("weights"))?;
        let x_f0 = match &cfg.follower_init {
            Some(x) => x.clone(),
            None => default_follower_init(q, dims, cfg.seed),
        };
        let (trajectory, rep) = run_laplacian_containment(
            &l,
            cfg.alpha,
            &x_f0,
            &cfg.leader_states,
            cfg.gamma,
            cfg.push_sum_max_iter,
            &cfg.record,
        )
        .map_err(|e| e.in_stage("simulate"))?;
        let avg = leaders_average(&cfg.leader_states)?;
        let report = RunReport {
            mode: cfg.mode.name().into(),
            method: "laplacian".into(),
            converged: rep.converged,
            iterations: rep.iterations,
            final_states: states_to_global(&p, &rep.final_x),
            leaders_average: avg.iter().copied().collect(),
            max_error_vs_leaders_average: None,
            objective: None,
            spectral_radius: None,
            empirical_rate: empirical_rate(&trajectory).ok(),
            optimizer_iterations: None,
            residual_trajectory: None,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            config_hash: cfg.config_hash.clone(),
            seed: cfg.seed,
        };
        return Ok(PipelineOutcome {
            report,
            trajectory,
            partition: p,
            weights: None,
            admm: None,
        });
    }

    // optimize
    let mut admm_outcome = None;
    let mut optimizer_iterations = None;
    let mut residual_trajectory = None;
    let (a1, a2_given) = match &cfg.optimizer {
        OptimizerChoice::Admm => {
            let outcome = run_admm(&gf, &pattern, &cfg.admm).map_err(|e| e.in_stage("optimize"))?;
            optimizer_iterations = Some(outcome.report.outer_iterations);
            residual_trajectory = Some(outcome.report.max_residual_trajectory.clone());
            let a1 = outcome.report.representative.clone();
            admm_outcome = Some(outcome);
            (a1, None)
        }
        OptimizerChoice::Centralized => {
            let sol =
                solve_centralized(&pattern, &cfg.centralized).map_err(|e| e.in_stage("optimize"))?;
            optimizer_iterations = Some(sol.iterations);
            (sol.a1, None)
        }
        OptimizerChoice::Wba => {
            let sol = wba_weights(&gf, None, cfg.wba_tol, 1_000_000)
                .map_err(|e| e.in_stage("optimize"))?;
            optimizer_iterations = Some(sol.iterations);
            (sol.matrix, None)
        }
        OptimizerChoice::Fixed { a1, a2 } => (a1.clone(), a2.clone()),
    };

    // assemble weights
    let a2 = match a2_given {
        Some(a2) => a2,
        None => generate_a2(&cfg.graph, &p, cfg.seed, false).map_err(|e| e.in_stage("weights"))?,
    };
    let weights = WeightMatrix::from_optimizer(a1, a2, &cfg.graph, &p)
        .map_err(|e| e.in_stage("weights"))?;

    // simulate
    let x_f0 = match &cfg.follower_init {
        Some(x) => x.clone(),
        None => default_follower_init(q, dims, cfg.seed),
    };
    let (trajectory, rep) = run_push_sum(
        &weights,
        &x_f0,
        &cfg.leader_states,
        cfg.gamma,
        cfg.push_sum_max_iter,
        &cfg.record,
    )
    .map_err(|e| e.in_stage("simulate"))?;

    let report = RunReport {
        mode: cfg.mode.name().into(),
        method: cfg.optimizer.name().into(),
        converged: rep.converged,
        iterations: rep.iterations,
        final_states: states_to_global(&p, &rep.final_x),
        leaders_average: rep.leaders_average.iter().copied().collect(),
        max_error_vs_leaders_average: Some(rep.max_error_vs_leaders_average),
        objective: Some(objective(weights.a1())?),
        spectral_radius: Some(convergence_rate(weights.a1())?),
        empirical_rate: empirical_rate(&trajectory).ok(),
        optimizer_iterations,
        residual_trajectory,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        config_hash: cfg.config_hash.clone(),
        seed: cfg.seed,
    };
    Ok(PipelineOutcome {
        report,
        trajectory,
        partition: p,
        weights: Some(weights),
        admm: admm_outcome,
    })
}
