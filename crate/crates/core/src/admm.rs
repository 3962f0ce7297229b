//! Distributed estimation of the optimal follower weight matrix: every
//! follower keeps a local copy of the design variable and the copies are
//! driven to the shared optimum by 2-block ADMM, with the coupling variable's
//! average computed over the directed follower graph by a dynamic-consensus
//! inner loop of `H` communication rounds.
//!
//! Each agent owns the topology constraint on its **own row only** (it knows
//! its in-neighbourhood, not the whole graph); row and column sums are
//! structural and enforced by everyone. Consensus propagates the other rows'
//! sparsity: the common limit satisfies every agent's row constraint, i.e.
//! the full pattern. Identically-initialized copies therefore differ from
//! the first iteration on, which is what makes the residual trajectory
//! informative.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{is_strongly_connected, DiGraph};
use crate::harness::{synchronous_step, Inbox};
use crate::matrixops::{agreement_matrix, spectral_norm};
use crate::weights::{balancing_init_bound, objective, Projector, SparsityPattern};

/// Which entries the sparsity residual `r^2` ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualSparsity {
    /// Off-pattern, off-diagonal entries of the agent's own row. The
    /// diagonal is an allowed self-weight, so it is not a violation.
    #[default]
    RowLocalOffDiagonal,
    /// Every non-in-neighbour column of the agent's own row, diagonal
    /// included. With a positive self-weight this residual never vanishes;
    /// kept selectable for comparison.
    IncludeDiagonal,
}

/// Tunables of the distributed optimizer.
#[derive(Debug, Clone)]
pub struct AdmmConfig {
    /// Penalty parameter of the augmented Lagrangian.
    pub rho: f64,
    /// Communication rounds of the inner consensus loop per outer iteration.
    pub inner_rounds: usize,
    /// Residual stopping tolerance.
    pub epsilon: f64,
    pub max_outer: usize,
    /// Projected-subgradient budget for the local primal update.
    pub subgradient_iters: usize,
    /// Improvement threshold that ends a stalled primal solve early.
    pub subgradient_tol: f64,
    pub residual_mode: ResidualSparsity,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 5.0,
            inner_rounds: 20,
            epsilon: 1e-3,
            max_outer: 3000,
            subgradient_iters: 300,
            subgradient_tol: 1e-9,
            residual_mode: ResidualSparsity::default(),
        }
    }
}

/// One follower's optimizer state: local copy, consensus estimate, dual,
/// inner-loop value, and node weight.
#[derive(Debug, Clone)]
pub struct AgentAdmmState {
    pub a1: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub v: f64,
    pub out_degree: usize,
    projector: Projector,
}

impl AgentAdmmState {
    pub fn projector(&self) -> &Projector {
        &self.projector
    }
}

/// Zeroed matrices and the node-weight initialization
/// `v_i(0,0) = min((1/d*)^(2D+1), 1/(2 d*))`; the clamp keeps the mixing
/// diagonal `1 - d_i v_i` strictly positive on degree-1 graphs.
pub fn init_admm(
    gf: &DiGraph,
    pattern: &SparsityPattern,
    cfg: &AdmmConfig,
) -> Result<Vec<AgentAdmmState>> {
    if cfg.inner_rounds == 0 {
        return Err(Error::InvalidInnerRounds);
    }
    if !(cfg.rho > 0.0) {
        return Err(Error::InvalidScenario("rho must be positive".into()));
    }
    let q = gf.n();
    let d_star = (0..q).map(|i| gf.out_degree(i)).max().unwrap_or(0);
    let v0 = if d_star == 0 {
        1.0
    } else {
        balancing_init_bound(gf)?.min(1.0 / (2.0 * d_star as f64))
    };
    let zero = DMatrix::zeros(q, q);
    (0..q)
        .map(|i| {
            let projector = Projector::new(&pattern.relax_except_row(i))?;
            Ok(AgentAdmmState {
                a1: zero.clone(),
                z: zero.clone(),
                c: zero.clone(),
                m: zero.clone(),
                v: v0,
                out_degree: gf.out_degree(i),
                projector,
            })
        })
        .collect()
}

fn norm_value_and_subgrad(diff: &DMatrix<f64>) -> Result<(f64, Option<DMatrix<f64>>)> {
    let res = spectral_norm(diff)?;
    if res.value <= 1e-15 {
        return Ok((res.value, None));
    }
    let (u, v) = res.singular_pair.expect("norm computes the pair");
    Ok((res.value, Some(u * v.transpose())))
}

fn local_objective(sigma: f64, q: usize, x: &DMatrix<f64>, z: &DMatrix<f64>, c: &DMatrix<f64>, rho: f64) -> f64 {
    let dxz = x - z;
    sigma / q as f64 + c.dot(&dxz) + 0.5 * rho * dxz.norm_squared()
}

/// Local primal update: approximately minimize
/// `(1/q)||X - J||_2 + <C_i, X - Z_i> + (rho/2)||X - Z_i||_F^2`
/// over the agent's affine set by projected subgradient with the
/// strongly-convex step `1/(rho (t+1))`, returning the best feasible iterate.
///
/// Both the previous copy and the projected consensus estimate seed the
/// candidate set, so the result never falls behind the naive feasible point.
pub fn primal_local_update(st: &mut AgentAdmmState, cfg: &AdmmConfig) -> Result<()> {
    let q = st.a1.nrows();
    let j = agreement_matrix(q);
    let rho = cfg.rho;

    let warm = st.projector.project(&st.a1)?.matrix;
    let from_z = st.projector.project(&st.z)?.matrix;
    let eval = |x: &DMatrix<f64>| -> Result<(f64, Option<DMatrix<f64>>, f64)> {
        let (sigma, gsub) = norm_value_and_subgrad(&(x - &j))?;
        Ok((sigma, gsub, local_objective(sigma, q, x, &st.z, &st.c, rho)))
    };
    let (warm_sigma, warm_gsub, warm_f) = eval(&warm)?;
    let (_, _, from_z_f) = eval(&from_z)?;

    let (mut x, mut gsub, mut f) = if warm_f <= from_z_f {
        (warm, warm_gsub, warm_f)
    } else {
        let (s, g, f) = eval(&from_z)?;
        let _ = s;
        (from_z, g, f)
    };
    let mut best_f = f;
    let mut best_x = x.clone();
    let mut stall = 0usize;
    for t in 0..cfg.subgradient_iters {
        let mut grad = &x - &st.z;
        grad *= rho;
        grad += &st.c;
        if let Some(g) = &gsub {
            grad += g * (1.0 / q as f64);
        }
        let eta = 1.0 / (rho * (t + 1) as f64);
        x = st.projector.project(&(&x - grad * eta))?.matrix;
        let (sigma, g, fx) = eval(&x)?;
        let _ = sigma;
        gsub = g;
        f = fx;
        if f < best_f {
            let improved = best_f - f;
            best_f = f;
            best_x.copy_from(&x);
            stall = if improved > cfg.subgradient_tol { 0 } else { stall + 1 };
        } else {
            stall += 1;
        }
        if stall >= 40 {
            break;
        }
    }
    st.a1 = best_x;
    Ok(())
}

/// Conservation drift observed across inner rounds, relative to the scale of
/// the conserved quantity.
#[derive(Debug, Clone, Copy, Default)]
pub struct InnerDrift {
    pub m_sum: f64,
    pub dv_sum: f64,
}

/// One simultaneous round of the dynamic-consensus recursions: every agent
/// sends `(v_i, M_i)` to its out-neighbours, then
/// `M_i <- (1 - d_i v_i) M_i + sum_in v_j M_j` and
/// `v_i <- (v_i + (1/d_i) sum_in v_j) / 2`.
///
/// The mixing is column stochastic, so the entrywise sum of the `M_i` and the
/// out-degree-weighted sum of the `v_i` are both preserved; the observed
/// drift is returned.
pub fn inner_consensus_round(states: &mut Vec<AgentAdmmState>, gf: &DiGraph) -> Result<InnerDrift> {
    let q = gf.n();
    let sum_before = states.iter().fold(DMatrix::zeros(q, q), |acc, st| acc + &st.m);
    let dv_before: f64 = states.iter().map(|st| st.out_degree as f64 * st.v).sum();

    let inner: Vec<(DMatrix<f64>, f64, usize)> = states
        .iter()
        .map(|st| (st.m.clone(), st.v, st.out_degree))
        .collect();
    let (next, _) = synchronous_step(
        gf,
        &inner,
        |src, (m, v, _)| {
            gf.out_neighbors(src)
                .iter()
                .map(|&dst| (dst, (v.clone(), m.clone())))
                .collect::<Vec<(usize, (f64, DMatrix<f64>))>>()
        },
        |i, (m, v, d), inbox: &Inbox<(f64, DMatrix<f64>)>| {
            let d_i = *d as f64;
            let self_weight = 1.0 - d_i * v;
            if self_weight < 0.0 {
                return Err(Error::InnerSelfWeightNegative {
                    agent: i,
                    value: self_weight,
                });
            }
            let mut m_next = m * self_weight;
            let mut v_in = 0.0;
            for &j in gf.in_neighbors(i) {
                let (vj, mj) = inbox.from_neighbor(j)?;
                m_next += mj * *vj;
                v_in += vj;
            }
            let v_next = if *d == 0 { *v } else { 0.5 * (v + v_in / d_i) };
            Ok((m_next, v_next, *d))
        },
    )?;
    for (st, (m, v, _)) in states.iter_mut().zip(next) {
        st.m = m;
        st.v = v;
    }

    let sum_after = states.iter().fold(DMatrix::zeros(q, q), |acc, st| acc + &st.m);
    let dv_after: f64 = states.iter().map(|st| st.out_degree as f64 * st.v).sum();
    let scale = sum_before.amax().max(1.0);
    Ok(InnerDrift {
        m_sum: (&sum_after - &sum_before).amax() / scale,
        dv_sum: (dv_after - dv_before).abs() / dv_before.abs().max(1.0),
    })
}

/// `H` rounds of [`inner_consensus_round`] starting from
/// `M_i(0,k) = (A1)_i(k+1)`, then `Z_i(k+1) = M_i(H,k)`. Node weights carry
/// over across outer iterations. Returns the worst conservation drift seen.
pub fn run_inner_loop(
    states: &mut Vec<AgentAdmmState>,
    gf: &DiGraph,
    inner_rounds: usize,
) -> Result<InnerDrift> {
    if inner_rounds == 0 {
        return Err(Error::InvalidInnerRounds);
    }
    for st in states.iter_mut() {
        st.m = st.a1.clone();
    }
    let mut worst = InnerDrift::default();
    for _ in 0..inner_rounds {
        let drift = inner_consensus_round(states, gf)?;
        worst.m_sum = worst.m_sum.max(drift.m_sum);
        worst.dv_sum = worst.dv_sum.max(drift.dv_sum);
    }
    for st in states.iter_mut() {
        st.z = st.m.clone();
    }
    Ok(worst)
}

/// `C_i <- C_i + rho [(A1)_i - Z_i]`.
pub fn dual_update(st: &mut AgentAdmmState, rho: f64) {
    let mut delta = &st.a1 - &st.z;
    delta *= rho;
    st.c += delta;
}

/// Per-agent stopping residuals: `r1` is the scaled Frobenius disagreement
/// with each in-neighbour's copy (one dedicated copy exchange per outer
/// iteration), `r2` the own-row sparsity violation per the configured
/// reading; `R_i` is their maximum.
pub fn residuals(
    states: &[AgentAdmmState],
    gf: &DiGraph,
    pattern: &SparsityPattern,
    mode: ResidualSparsity,
) -> Result<Vec<f64>> {
    let q = gf.n();
    let seed: Vec<(DMatrix<f64>, f64)> = states.iter().map(|st| (st.a1.clone(), 0.0)).collect();
    let (with_residuals, _) = synchronous_step(
        gf,
        &seed,
        |src, (a1, _)| {
            gf.out_neighbors(src)
                .iter()
                .map(|&dst| (dst, a1.clone()))
                .collect::<Vec<(usize, DMatrix<f64>)>>()
        },
        |i, (a1, _), inbox: &Inbox<DMatrix<f64>>| {
            let mut r1 = 0.0_f64;
            for &j in gf.in_neighbors(i) {
                let other = inbox.from_neighbor(j)?;
                r1 = r1.max((a1 - other).norm() / q as f64);
            }
            let mut r2 = 0.0_f64;
            for col in 0..q {
                let in_pattern = match mode {
                    ResidualSparsity::RowLocalOffDiagonal => pattern.is_allowed(i, col),
                    ResidualSparsity::IncludeDiagonal => {
                        col != i && gf.in_neighbors(i).binary_search(&col).is_ok()
                    }
                };
                if !in_pattern {
                    r2 = r2.max(a1[(i, col)].abs());
                }
            }
            Ok((a1.clone(), r1.max(r2)))
        },
    )?;
    Ok(with_residuals.into_iter().map(|(_, r)| r).collect())
}

/// Diagnostics of a full optimizer run.
#[derive(Debug, Clone)]
pub struct AdmmReport {
    pub outer_iterations: usize,
    pub converged: bool,
    /// `max_i R_i` per outer iteration.
    pub max_residual_trajectory: Vec<f64>,
    /// Per-outer, per-agent `R_i`.
    pub residual_history: Vec<Vec<f64>>,
    pub per_agent_objectives: Vec<f64>,
    pub max_pairwise_disagreement: f64,
    pub max_m_conservation_drift: f64,
    pub max_v_conservation_drift: f64,
    /// Mean of the copies projected onto the full pattern; always feasible.
    pub representative: DMatrix<f64>,
    pub representative_objective: f64,
}

/// Final copies plus the report.
#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub copies: Vec<DMatrix<f64>>,
    pub report: AdmmReport,
}

/// The full outer loop: primal updates, `H` inner consensus rounds, dual
/// updates, then the residual exchange, until `max_i R_i <= epsilon` or the
/// outer budget runs out (flagged, best state returned).
pub fn run_admm(
    gf: &DiGraph,
    pattern: &SparsityPattern,
    cfg: &AdmmConfig,
) -> Result<AdmmOutcome> {
    if !is_strongly_connected(gf) {
        return Err(Error::NotStronglyConnected);
    }
    let q = gf.n();
    let mut states = init_admm(gf, pattern, cfg)?;
    let mut max_residual_trajectory = Vec::new();
    let mut residual_history = Vec::new();
    let mut drift = InnerDrift::default();
    let mut converged = false;
    let mut outer_iterations = 0;
    for _ in 0..cfg.max_outer {
        outer_iterations += 1;
        for st in states.iter_mut() {
            primal_local_update(st, cfg)?;
        }
        let d = run_inner_loop(&mut states, gf, cfg.inner_rounds)?;
        drift.m_sum = drift.m_sum.max(d.m_sum);
        drift.dv_sum = drift.dv_sum.max(d.dv_sum);
        for st in states.iter_mut() {
            dual_update(st, cfg.rho);
        }
        let r = residuals(&states, gf, pattern, cfg.residual_mode)?;
        let rmax = r.iter().copied().fold(0.0, f64::max);
        residual_history.push(r);
        max_residual_trajectory.push(rmax);
        if rmax <= cfg.epsilon {
            converged = true;
            break;
        }
    }

    let copies: Vec<DMatrix<f64>> = states.iter().map(|st| st.a1.clone()).collect();
    let per_agent_objectives: Vec<f64> = copies
        .iter()
        .map(|c| objective(c))
        .collect::<Result<_>>()?;
    let mut max_pairwise_disagreement = 0.0_f64;
    for i in 0..q {
        for j in i + 1..q {
            max_pairwise_disagreement =
                max_pairwise_disagreement.max((&copies[i] - &copies[j]).norm());
        }
    }
    let mean = copies.iter().fold(DMatrix::zeros(q, q), |acc, c| acc + c) / q as f64;
    let representative = Projector::new(pattern)?.project(&mean)?.matrix;
    let representative_objective = objective(&representative)?;

    Ok(AdmmOutcome {
        copies,
        report: AdmmReport {
            outer_iterations,
            converged,
            max_residual_trajectory,
            residual_history,
            per_agent_objectives,
            max_pairwise_disagreement,
            max_m_conservation_drift: drift.m_sum,
            max_v_conservation_drift: drift.dv_sum,
            representative,
            representative_objective,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixops::agreement_matrix;
    use approx::assert_abs_diff_eq;

    fn cycle(q: usize) -> DiGraph {
        DiGraph::new(q, &(0..q).map(|i| (i, (i + 1) % q)).collect::<Vec<_>>()).unwrap()
    }

    fn complete(q: usize) -> DiGraph {
        let mut edges = Vec::new();
        for i in 0..q {
            for j in 0..q {
                if i != j {
                    edges.push((i, j));
                }
            }
        }
        DiGraph::new(q, &edges).unwrap()
    }

    #[test]
    fn init_node_weights() {
        let cfg = AdmmConfig::default();
        // 3-cycle: bound (1/1)^5 = 1, clamped to 1/(2*1)
        let g = cycle(3);
        let pat = SparsityPattern::from_follower_graph(&g);
        let states = init_admm(&g, &pat, &cfg).unwrap();
        for st in &states {
            assert_eq!(st.v, 0.5);
            assert_eq!(st.c, DMatrix::zeros(3, 3));
            assert_eq!(st.a1, DMatrix::zeros(3, 3));
        }
        // complete 4-graph: d* = 3, D = 1 -> (1/3)^3
        let g = complete(4);
        let pat = SparsityPattern::from_follower_graph(&g);
        let states = init_admm(&g, &pat, &cfg).unwrap();
        for st in &states {
            assert_abs_diff_eq!(st.v, 1.0 / 27.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn inner_round_hand_arithmetic() {
        // 3-cycle, v = 0.2 uniform, M_0 = 3, rest 0 (as constant matrices):
        // M(1) = (2.4, 0.6, 0) and the sum is conserved
        let g = cycle(3);
        let pat = SparsityPattern::from_follower_graph(&g);
        let mut states = init_admm(&g, &pat, &AdmmConfig::default()).unwrap();
        for st in states.iter_mut() {
            st.v = 0.2;
        }
        states[0].m = DMatrix::from_element(3, 3, 3.0);
        let drift = inner_consensus_round(&mut states, &g).unwrap();
        assert_abs_diff_eq!(states[0].m[(0, 0)], 2.4, epsilon = 1e-15);
        assert_abs_diff_eq!(states[1].m[(1, 1)], 0.6, epsilon = 1e-15);
        assert_eq!(states[2].m[(2, 2)], 0.0);
        assert!(drift.m_sum <= 1e-15);
        // uniform v on the regular cycle is a fixed point of the v-recursion
        for st in &states {
            assert_eq!(st.v, 0.2);
        }
    }

    #[test]
    fn inner_loop_rejects_h_zero_and_reaches_mean() {
        let g = cycle(5);
        let pat = SparsityPattern::from_follower_graph(&g);
        let mut states = init_admm(&g, &pat, &AdmmConfig::default()).unwrap();
        assert!(matches!(
            run_inner_loop(&mut states, &g, 0),
            Err(Error::InvalidInnerRounds)
        ));

        // distinct fixed local copies: Z_i -> their mean after many rounds
        for (i, st) in states.iter_mut().enumerate() {
            st.a1 = DMatrix::from_element(5, 5, i as f64);
        }
        let mean = DMatrix::from_element(5, 5, (0 + 1 + 2 + 3 + 4) as f64 / 5.0);
        run_inner_loop(&mut states, &g, 200).unwrap();
        for st in &states {
            assert!((&st.z - &mean).amax() <= 1e-6);
        }
    }

    #[test]
    fn consensus_is_inner_fixed_point() {
        let g = cycle(4);
        let pat = SparsityPattern::from_follower_graph(&g);
        let mut states = init_admm(&g, &pat, &AdmmConfig::default()).unwrap();
        let shared = DMatrix::from_fn(4, 4, |i, j| (i + 2 * j) as f64);
        for st in states.iter_mut() {
            st.a1 = shared.clone();
        }
        run_inner_loop(&mut states, &g, 7).unwrap();
        for st in &states {
            assert!((&st.z - &shared).amax() <= 1e-12);
        }
    }

    #[test]
    fn dual_update_formula() {
        let g = cycle(3);
        let pat = SparsityPattern::from_follower_graph(&g);
        let mut states = init_admm(&g, &pat, &AdmmConfig::default()).unwrap();
        // (A1)_i = Z_i leaves C_i unchanged
        states[0].a1 = DMatrix::from_element(3, 3, 0.4);
        states[0].z = states[0].a1.clone();
        dual_update(&mut states[0], 5.0);
        assert_eq!(states[0].c, DMatrix::zeros(3, 3));
        // C = 0, rho = 5, A1 - Z = E -> C = 5E
        states[1].a1 = DMatrix::from_element(3, 3, 1.0);
        states[1].z = DMatrix::zeros(3, 3);
        dual_update(&mut states[1], 5.0);
        assert_eq!(states[1].c, DMatrix::from_element(3, 3, 5.0));
        dual_update(&mut states[1], 5.0);
        assert_eq!(states[1].c, DMatrix::from_element(3, 3, 10.0));
    }

    #[test]
    fn primal_update_on_full_pattern_with_z_at_j_returns_j() {
        let g = complete(3);
        let pat = SparsityPattern::full(3);
        let cfg = AdmmConfig::default();
        let mut states = init_admm(&g, &pat, &cfg).unwrap();
        states[0].z = agreement_matrix(3);
        primal_local_update(&mut states[0], &cfg).unwrap();
        assert!((&states[0].a1 - agreement_matrix(3)).amax() <= 1e-9);
    }

    #[test]
    fn primal_update_large_rho_tracks_projection() {
        // with rho huge the quadratic dominates and the minimizer is the
        // projection of Z_i; Z_i is chosen feasible so the oracle is exact
        let g = cycle(3);
        let pat = SparsityPattern::from_follower_graph(&g);
        let mut cfg = AdmmConfig::default();
        cfg.rho = 1e4;
        let mut states = init_admm(&g, &pat, &cfg).unwrap();
        let feasible = crate::weights::project_affine(
            &DMatrix::from_fn(3, 3, |i, j| ((2 * i + j) % 3) as f64),
            &pat,
        )
        .unwrap()
        .matrix;
        states[0].z = feasible.clone();
        primal_local_update(&mut states[0], &cfg).unwrap();
        assert!((&states[0].a1 - &feasible).amax() <= 1e-3);
    }

    #[test]
    fn primal_update_beats_naive_feasible_point() {
        let g = cycle(4);
        let pat = SparsityPattern::from_follower_graph(&g);
        let cfg = AdmmConfig::default();
        let mut states = init_admm(&g, &pat, &cfg).unwrap();
        let z = crate::weights::project_affine(
            &DMatrix::from_fn(4, 4, |i, j| (i as f64 - j as f64) / 3.0),
            &pat,
        )
        .unwrap()
        .matrix;
        states[0].z = z.clone();
        primal_local_update(&mut states[0], &cfg).unwrap();
        let q = 4;
        let f = |x: &DMatrix<f64>| {
            objective(x).unwrap() / q as f64
                + states[0].c.dot(&(x - &z))
                + 0.5 * cfg.rho * (x - &z).norm_squared()
        };
        assert!(f(&states[0].a1) <= f(&z) + 1e-8);
    }

    #[test]
    fn admm_complete_graph_reaches_agreement_matrix() {
        let g = complete(4);
        let pat = SparsityPattern::from_follower_graph(&g);
        let mut cfg = AdmmConfig::default();
        cfg.inner_rounds = 10;
        cfg.max_outer = 400;
        let outcome = run_admm(&g, &pat, &cfg).unwrap();
        assert!(outcome.report.converged);
        for obj in &outcome.report.per_agent_objectives {
            assert!(*obj <= 0.02, "objective {obj} too far from 0");
        }
        assert!(outcome.report.representative_objective <= 1e-2);
        assert!((outcome.report.representative - agreement_matrix(4)).amax() <= 1e-2);
    }

    #[test]
    fn admm_cycle_matches_circulant_optimum() {
        let g = cycle(3);
        let pat = SparsityPattern::from_follower_graph(&g);
        let cfg = AdmmConfig::default();
        let outcome = run_admm(&g, &pat, &cfg).unwrap();
        assert!(outcome.report.converged);
        for obj in &outcome.report.per_agent_objectives {
            assert!((obj - 0.5).abs() / 0.5 <= 0.02, "objective {obj} not within 2% of 0.5");
        }
        assert!(outcome.report.max_m_conservation_drift <= 1e-10);
        assert!(outcome.report.max_v_conservation_drift <= 1e-10);
    }

    #[test]
    fn residual_readings() {
        let g = cycle(3);
        let pat = SparsityPattern::from_follower_graph(&g);
        let mut states = init_admm(&g, &pat, &AdmmConfig::default()).unwrap();
        // equal copies, zero off-pattern: row-local residuals vanish
        let feasible =
            crate::weights::project_affine(&DMatrix::zeros(3, 3), &pat).unwrap().matrix;
        for st in states.iter_mut() {
            st.a1 = feasible.clone();
        }
        let r = residuals(&states, &g, &pat, ResidualSparsity::RowLocalOffDiagonal).unwrap();
        assert!(r.iter().all(|&ri| ri <= 1e-12));
        // the literal reading counts the positive diagonal as a violation
        let r = residuals(&states, &g, &pat, ResidualSparsity::IncludeDiagonal).unwrap();
        assert!(r.iter().all(|&ri| ri >= 0.4));

        // a single off-pattern entry of magnitude 0.3 in agent 0's own row
        states[0].a1[(0, 1)] = 0.3; // edge in the 3-cycle is 2 -> 0, so (0,1) is off-pattern
        let r = residuals(&states, &g, &pat, ResidualSparsity::RowLocalOffDiagonal).unwrap();
        assert!(r[0] >= 0.3);

        // disagreement E between neighbours: r1 = ||E||_F / q
        let mut states = init_admm(&g, &pat, &AdmmConfig::default()).unwrap();
        for st in states.iter_mut() {
            st.a1 = feasible.clone();
        }
        states[2].a1 = &feasible + DMatrix::from_element(3, 3, 0.1);
        let e_norm = DMatrix::from_element(3, 3, 0.1_f64).norm();
        let r = residuals(&states, &g, &pat, ResidualSparsity::RowLocalOffDiagonal).unwrap();
        // agent 0 hears agent 2
        assert_abs_diff_eq!(r[0], e_norm / 3.0, epsilon = 1e-12);
    }
}
