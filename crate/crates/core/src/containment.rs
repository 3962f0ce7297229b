//! The two dynamics engines: the push-sum average-consensus containment
//! protocol and the Laplacian containment baseline, plus convergence-rate
//! diagnostics.
//!
//! States are kept in block order, followers first and leaders last. Leader
//! rows of the sum, weight, and state vectors never change; multi-dimensional
//! states evolve componentwise and share a single weight vector, since the
//! weight dynamics do not depend on the state values.
//!
//! The follower ratio converges to the leaders' average. Two regimes show up
//! in trajectories: a geometric transient governed by `rho(A1 - J)` (the
//! rate the design modules optimize), and, once the transient has died, a
//! slow `1/k` tail whenever the leaders keep injecting a spread of values.
//! The per-round increment ratio `(s(k+1)-s(k)) / (w(k+1)-w(k))` is free of
//! that tail and converges geometrically to the run's limit, so reports carry
//! it as `limit_estimate`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{DiGraph, LaplacianBlocks, Partition};
use crate::matrixops::{agreement_matrix, spectral_radius};

/// Column-sum tolerance for push-sum weight matrices.
pub const COLUMN_SUM_TOL: f64 = 1e-12;

/// Entries of an optimizer output in `(-DUST_TOL, 0)` are treated as
/// numerical dust: zeroed, with the deficit absorbed into the diagonal.
/// Anything more negative is a genuine infeasibility and is refused.
pub const DUST_TOL: f64 = 1e-9;

/// Which stochasticity contract a weight matrix was built under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Column-stochastic `A1`, `A2`; nonnegative; positive diagonal.
    PushSum,
    /// `A1 = I - alpha L1`, `A2 = -alpha L2`; row sums of `[A1 A2]` are 1.
    LaplacianBaseline,
}

/// The blocks of `A = [[A1, A2], [0, I]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    mode: WeightMode,
}

impl WeightMatrix {
    /// Validate and wrap push-sum weights against the interaction graph.
    ///
    /// Checks: nonnegative entries, strictly positive `A1` diagonal, column
    /// sums of both blocks equal to 1 within [`COLUMN_SUM_TOL`], and sparsity
    /// honoring the graph (`A1[i][j] > 0` only on follower edges `j -> i` or
    /// the diagonal; `A2[i][l] > 0` only where leader `l` feeds follower `i`).
    pub fn push_sum(
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        g: &DiGraph,
        p: &Partition,
    ) -> Result<Self> {
        let q = p.follower_count();
        let m = p.leader_count();
        if a1.nrows() != q || a1.ncols() != q || a2.nrows() != q || a2.ncols() != m {
            return Err(Error::InvalidWeightMatrix(format!(
                "expected A1 {q}x{q} and A2 {q}x{m}, got {}x{} and {}x{}",
                a1.nrows(),
                a1.ncols(),
                a2.nrows(),
                a2.ncols()
            )));
        }
        if a1.iter().chain(a2.iter()).any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidWeightMatrix(
                "push-sum weights must be nonnegative and finite".into(),
            ));
        }
        for i in 0..q {
            if a1[(i, i)] <= 0.0 {
                return Err(Error::InvalidWeightMatrix(format!(
                    "A1 diagonal entry {i} must be strictly positive"
                )));
            }
        }
        for j in 0..q {
            let col_sum: f64 = a1.column(j).iter().sum();
            if (col_sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidWeightMatrix(format!(
                    "A1 column {j} sums to {col_sum}, expected 1"
                )));
            }
        }
        for l in 0..m {
            let col_sum: f64 = a2.column(l).iter().sum();
            if (col_sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidWeightMatrix(format!(
                    "A2 column {l} sums to {col_sum}, expected 1"
                )));
            }
        }
        for i in 0..q {
            for j in 0..q {
                if i != j && a1[(i, j)] > 0.0 {
                    let src = p.followers()[j];
                    let dst = p.followers()[i];
                    if !g.has_edge(src, dst) {
                        return Err(Error::InvalidWeightMatrix(format!(
                            "A1[{i}][{j}] > 0 but there is no edge {src} -> {dst}"
                        )));
                    }
                }
            }
            for l in 0..m {
                if a2[(i, l)] > 0.0 {
                    let src = p.leaders()[l];
                    let dst = p.followers()[i];
                    if !g.has_edge(src, dst) {
                        return Err(Error::InvalidWeightMatrix(format!(
                            "A2[{i}][{l}] > 0 but leader {src} does not feed follower {dst}"
                        )));
                    }
                }
            }
        }
        Ok(WeightMatrix {
            a1,
            a2,
            mode: WeightMode::PushSum,
        })
    }

    /// Wrap an optimizer output as push-sum weights.
    ///
    /// Entries in `(-DUST_TOL, 0)` are zeroed and each column's deficit is
    /// absorbed into its diagonal entry; entries at or below `-DUST_TOL` are
    /// refused rather than clipped.
    pub fn from_optimizer(
        mut a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        g: &DiGraph,
        p: &Partition,
    ) -> Result<Self> {
        let min_entry = a1.iter().copied().fold(f64::INFINITY, f64::min);
        if min_entry <= -DUST_TOL {
            return Err(Error::InvalidWeightMatrix(format!(
                "optimized A1 has negative entry {min_entry:.3e}; the affine \
                 feasible set admits it but the push-sum protocol does not"
            )));
        }
        a1.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v = 0.0;
            }
        });
        let q = a1.nrows();
        for j in 0..q {
            let deficit = 1.0 - a1.column(j).iter().sum::<f64>();
            a1[(j, j)] += deficit;
        }
        Self::push_sum(a1, a2, g, p)
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn a2(&self) -> &DMatrix<f64> {
        &self.a2
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    /// The full `(q + m)` square matrix of the block form `[[A1, A2], [0, I]]`.
    pub fn assembled(&self) -> DMatrix<f64> {
        let q = self.a1.nrows();
        let m = self.a2.ncols();
        let mut a = DMatrix::zeros(q + m, q + m);
        a.view_mut((0, 0), (q, q)).copy_from(&self.a1);
        a.view_mut((0, q), (q, m)).copy_from(&self.a2);
        for l in 0..m {
            a[(q + l, q + l)] = 1.0;
        }
        a
    }
}

/// Baseline protocol weights `A1 = I - alpha L1`, `A2 = -alpha L2`.
///
/// Row-stochastic across `[A1 A2]` by the Laplacian's zero row sums; the
/// column-stochasticity checks of the push-sum mode do not apply.
pub fn laplacian_protocol_matrices(l: &LaplacianBlocks, alpha: f64) -> WeightMatrix {
    let q = l.l1.nrows();
    let a1 = DMatrix::identity(q, q) - &l.l1 * alpha;
    let a2 = -&l.l2 * alpha;
    WeightMatrix {
        a1,
        a2,
        mode: WeightMode::LaplacianBaseline,
    }
}

/// Componentwise mean of the leader states (rows of `x_l` are leaders,
/// columns are state dimensions).
pub fn leaders_average(x_l: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = x_l.nrows();
    if m == 0 {
        return Err(Error::NoLeaders);
    }
    let mut avg = DVector::zeros(x_l.ncols());
    for dim in 0..x_l.ncols() {
        avg[dim] = x_l.column(dim).sum() / m as f64;
    }
    Ok(avg)
}

/// Per-agent protocol state in block order: sums `s`, weights `w`, and the
/// ratio readout `x = s / w` for followers. Leader rows are pinned to their
/// initial values.
#[derive(Debug, Clone)]
pub struct PushSumState {
    s_f: DMatrix<f64>,
    w_f: DVector<f64>,
    x_f: DMatrix<f64>,
    x_l: DMatrix<f64>,
    w_l: DVector<f64>,
    iteration: usize,
}

impl PushSumState {
    /// `s(0) = x(0)`, `w(0) = 1` for every agent.
    pub fn init(x_f0: &DMatrix<f64>, x_l: &DMatrix<f64>) -> Self {
        PushSumState {
            s_f: x_f0.clone(),
            w_f: DVector::from_element(x_f0.nrows(), 1.0),
            x_f: x_f0.clone(),
            x_l: x_l.clone(),
            w_l: DVector::from_element(x_l.nrows(), 1.0),
            iteration: 0,
        }
    }

    pub fn x_f(&self) -> &DMatrix<f64> {
        &self.x_f
    }

    pub fn s_f(&self) -> &DMatrix<f64> {
        &self.s_f
    }

    pub fn w_f(&self) -> &DVector<f64> {
        &self.w_f
    }

    /// Leader states; also the leader block of `s` at every iteration.
    pub fn x_l(&self) -> &DMatrix<f64> {
        &self.x_l
    }

    /// Leader weights; identically 1.
    pub fn w_l(&self) -> &DVector<f64> {
        &self.w_l
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// All-agent state in block order (followers then leaders).
    pub fn x_all(&self) -> DMatrix<f64> {
        stack_blocks(&self.x_f, &self.x_l)
    }
}

fn stack_blocks(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    out.view_mut((top.nrows(), 0), (bottom.nrows(), bottom.ncols()))
        .copy_from(bottom);
    out
}

/// One synchronous protocol round: `s <- A s`, `w <- A w`, follower
/// `x_i <- s_i / w_i`. Leader rows are fixed by the block structure.
pub fn push_sum_round(st: &PushSumState, w: &WeightMatrix) -> Result<PushSumState> {
    if w.mode != WeightMode::PushSum {
        return Err(Error::InvalidWeightMatrix(
            "push_sum_round requires push-sum mode weights".into(),
        ));
    }
    let s_f = &w.a1 * &st.s_f + &w.a2 * &st.x_l;
    let w_f = &w.a1 * &st.w_f + &w.a2 * &st.w_l;
    for (i, &wi) in w_f.iter().enumerate() {
        if wi <= 0.0 {
            return Err(Error::NonPositivePushSumWeight {
                agent: i,
                value: wi,
                iteration: st.iteration + 1,
            });
        }
    }
    let mut x_f = s_f.clone();
    for r in 0..x_f.nrows() {
        for c in 0..x_f.ncols() {
            x_f[(r, c)] /= w_f[r];
        }
    }
    Ok(PushSumState {
        s_f,
        w_f,
        x_f,
        x_l: st.x_l.clone(),
        w_l: st.w_l.clone(),
        iteration: st.iteration + 1,
    })
}

/// What a run records along the way.
#[derive(Debug, Clone)]
pub struct RecordOptions {
    /// Record every `stride`-th round (round 0 always included).
    pub stride: usize,
    /// Keep state snapshots (errors are always kept at the stride).
    pub snapshots: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions {
            stride: 1,
            snapshots: true,
        }
    }
}

/// Recorded history of a containment run.
///
/// `errors` holds the follower error `max |x_F(k) - xbar_L|` at the recorded
/// rounds; snapshots hold the all-agent state in block order. With stride 1
/// the snapshot count is exactly `iterations + 1`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub stride: usize,
    pub iterations: usize,
    pub snapshots: Vec<(usize, DMatrix<f64>)>,
    pub errors: Vec<(usize, f64)>,
}

impl Trajectory {
    /// Wrap a bare error sequence (one entry per round, starting at round 0).
    pub fn from_error_series(errors: &[f64]) -> Self {
        Trajectory {
            stride: 1,
            iterations: errors.len().saturating_sub(1),
            snapshots: Vec::new(),
            errors: errors.iter().copied().enumerate().collect(),
        }
    }
}

/// Outcome of a push-sum containment run.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    /// All-agent final state, block order.
    pub final_x: DMatrix<f64>,
    pub leaders_average: DVector<f64>,
    /// `max_i max_dim |x_i - xbar_L|` over followers at the final round.
    pub max_error_vs_leaders_average: f64,
    /// Per-round increment ratio at the end of the run; converges to the
    /// run's limit geometrically, free of the `1/k` tail of the raw ratio.
    pub limit_estimate: DMatrix<f64>,
    pub gamma: f64,
}

fn follower_error(x_f: &DMatrix<f64>, avg: &DVector<f64>) -> f64 {
    let mut err = 0.0_f64;
    for c in 0..x_f.ncols() {
        for r in 0..x_f.nrows() {
            err = err.max((x_f[(r, c)] - avg[c]).abs());
        }
    }
    err
}

/// Run the push-sum protocol until every follower's successive iterate error
/// is at most `gamma` in every state dimension, or `max_iter` rounds.
pub fn run_push_sum(
    w: &WeightMatrix,
    x_f0: &DMatrix<f64>,
    x_l: &DMatrix<f64>,
    gamma: f64,
    max_iter: usize,
    opts: &RecordOptions,
) -> Result<(Trajectory, ConvergenceReport)> {
    if w.mode != WeightMode::PushSum {
        return Err(Error::InvalidWeightMatrix(
            "run_push_sum requires push-sum mode weights".into(),
        ));
    }
    let q = w.a1.nrows();
    let dims = x_f0.ncols();
    if x_f0.nrows() != q || x_l.ncols() != dims || x_l.nrows() != w.a2.ncols() {
        return Err(Error::DimensionMismatch(
            "follower/leader state blocks do not match the weight matrix".into(),
        ));
    }
    let stride = opts.stride.max(1);
    let avg = leaders_average(x_l)?;

    // constant injections
    let bs = &w.a2 * x_l;
    let bw = &w.a2 * DVector::from_element(x_l.nrows(), 1.0);

    let mut s = x_f0.clone();
    let mut s_next = DMatrix::zeros(q, dims);
    let mut wv: DVector<f64> = DVector::from_element(q, 1.0);
    let mut wv_next = DVector::zeros(q);
    let mut x = x_f0.clone();
    let mut x_prev = x_f0.clone();

    let mut trajectory = Trajectory {
        stride,
        iterations: 0,
        snapshots: Vec::new(),
        errors: Vec::new(),
    };
    trajectory.errors.push((0, follower_error(&x, &avg)));
    if opts.snapshots {
        trajectory.snapshots.push((0, stack_blocks(&x, x_l)));
    }

    let mut converged = false;
    let mut k = 0usize;
    while k < max_iter {
        k += 1;
        s_next.copy_from(&bs);
        s_next.gemm(1.0, &w.a1, &s, 1.0);
        wv_next.copy_from(&bw);
        wv_next.gemv(1.0, &w.a1, &wv, 1.0);
        for (i, &wi) in wv_next.iter().enumerate() {
            if wi <= 0.0 {
                return Err(Error::NonPositivePushSumWeight {
                    agent: i,
                    value: wi,
                    iteration: k,
                });
            }
        }
        std::mem::swap(&mut x_prev, &mut x);
        for c in 0..dims {
            for r in 0..q {
                x[(r, c)] = s_next[(r, c)] / wv_next[r];
            }
        }
        std::mem::swap(&mut s, &mut s_next);
        std::mem::swap(&mut wv, &mut wv_next);

        if k % stride == 0 {
            trajectory.errors.push((k, follower_error(&x, &avg)));
            if opts.snapshots {
                trajectory.snapshots.push((k, stack_blocks(&x, x_l)));
            }
        }

        let mut worst = 0.0_f64;
        for c in 0..dims {
            for r in 0..q {
                worst = worst.max((x[(r, c)] - x_prev[(r, c)]).abs());
            }
        }
        if worst <= gamma {
            converged = true;
            break;
        }
    }
    trajectory.iterations = k;
    if k % stride != 0 {
        trajectory.errors.push((k, follower_error(&x, &avg)));
        if opts.snapshots {
            trajectory.snapshots.push((k, stack_blocks(&x, x_l)));
        }
    }

    // limit estimate: one extra round, ratio of increments
    s_next.copy_from(&bs);
    s_next.gemm(1.0, &w.a1, &s, 1.0);
    wv_next.copy_from(&bw);
    wv_next.gemv(1.0, &w.a1, &wv, 1.0);
    let mut limit_estimate = DMatrix::zeros(q, dims);
    for r in 0..q {
        let dw = wv_next[r] - wv[r];
        for c in 0..dims {
            let ds = s_next[(r, c)] - s[(r, c)];
            limit_estimate[(r, c)] = if dw > 0.0 { ds / dw } else { x[(r, c)] };
        }
    }

    let report = ConvergenceReport {
        converged,
        iterations: k,
        final_x: stack_blocks(&x, x_l),
        leaders_average: avg.clone(),
        max_error_vs_leaders_average: follower_error(&x, &avg),
        limit_estimate,
        gamma,
    };
    Ok((trajectory, report))
}

/// Largest admissible step for the Laplacian baseline:
/// `min over eigenvalues of L1 of 2 Re(lambda) / |lambda|^2`.
pub fn max_stepsize(l1: &DMatrix<f64>) -> Result<f64> {
    let eig = spectral_radius(l1)?;
    let mut bound = f64::INFINITY;
    for lambda in &eig.eigenvalues {
        if lambda.re <= 0.0 {
            return Err(Error::NonPositiveEigenvalue(lambda.re));
        }
        bound = bound.min(2.0 * lambda.re / (lambda.re * lambda.re + lambda.im * lambda.im));
    }
    Ok(bound)
}

/// Baseline fixed point `-L1^{-1} L2 x_L`.
pub fn containment_fixed_point(l: &LaplacianBlocks, x_l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rhs = -(&l.l2 * x_l);
    crate::matrixops::solve_linear(&l.l1, &rhs)
}

/// Outcome of a Laplacian baseline run.
#[derive(Debug, Clone)]
pub struct LaplacianReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_x: DMatrix<f64>,
    pub alpha: f64,
    pub stepsize_bound: Option<f64>,
    /// False when `alpha` exceeded the bound; the run still proceeds so the
    /// divergence can be demonstrated.
    pub stepsize_ok: bool,
    pub max_error_vs_fixed_point: Option<f64>,
    /// Per-round growth of the successive error, reported when the run did
    /// not converge.
    pub growth_factor: Option<f64>,
}

/// Iterate `x_F <- A1 x_F + A2 x_L` with `A1 = I - alpha L1`, `A2 = -alpha L2`.
///
/// A step size above the bound is a warning, not an error; the run proceeds
/// and reports the observed growth factor. Runs whose error exceeds 1e12 bail
/// out early to keep divergent demonstrations finite.
pub fn run_laplacian_containment(
    l: &LaplacianBlocks,
    alpha: f64,
    x_f0: &DMatrix<f64>,
    x_l: &DMatrix<f64>,
    gamma: f64,
    max_iter: usize,
    opts: &RecordOptions,
) -> Result<(Trajectory, LaplacianReport)> {
    let w = laplacian_protocol_matrices(l, alpha);
    let stride = opts.stride.max(1);
    let avg = leaders_average(x_l)?;
    let bound = max_stepsize(&l.l1).ok();
    let stepsize_ok = bound.map_or(false, |b| alpha > 0.0 && alpha < b);
    let fixed_point = containment_fixed_point(l, x_l).ok();

    let b = &w.a2 * x_l;
    let q = x_f0.nrows();
    let dims = x_f0.ncols();
    let mut x = x_f0.clone();
    let mut x_next = DMatrix::zeros(q, dims);

    let mut trajectory = Trajectory {
        stride,
        iterations: 0,
        snapshots: Vec::new(),
        errors: Vec::new(),
    };
    trajectory.errors.push((0, follower_error(&x, &avg)));
    if opts.snapshots {
        trajectory.snapshots.push((0, stack_blocks(&x, x_l)));
    }

    let mut converged = false;
    let mut k = 0usize;
    let mut successive = Vec::new();
    while k < max_iter {
        k += 1;
        x_next.copy_from(&b);
        x_next.gemm(1.0, &w.a1, &x, 1.0);
        let mut worst = 0.0_f64;
        for c in 0..dims {
            for r in 0..q {
                worst = worst.max((x_next[(r, c)] - x[(r, c)]).abs());
            }
        }
        successive.push(worst);
        std::mem::swap(&mut x, &mut x_next);
        if k % stride == 0 {
            trajectory.errors.push((k, follower_error(&x, &avg)));
            if opts.snapshots {
                trajectory.snapshots.push((k, stack_blocks(&x, x_l)));
            }
        }
        if worst <= gamma {
            converged = true;
            break;
        }
        if worst > 1e12 {
            break;
        }
    }
    trajectory.iterations = k;
    if k % stride != 0 {
        trajectory.errors.push((k, follower_error(&x, &avg)));
        if opts.snapshots {
            trajectory.snapshots.push((k, stack_blocks(&x, x_l)));
        }
    }

    let growth_factor = if !converged && successive.len() >= 11 {
        let last = successive[successive.len() - 1];
        let earlier = successive[successive.len() - 11];
        (earlier > 0.0).then(|| (last / earlier).powf(0.1))
    } else {
        None
    };
    let max_error_vs_fixed_point = fixed_point.as_ref().map(|fp| {
        let mut err = 0.0_f64;
        for c in 0..dims {
            for r in 0..q {
                err = err.max((x[(r, c)] - fp[(r, c)]).abs());
            }
        }
        err
    });

    let report = LaplacianReport {
        converged,
        iterations: k,
        final_x: stack_blocks(&x, x_l),
        alpha,
        stepsize_bound: bound,
        stepsize_ok,
        max_error_vs_fixed_point,
        growth_factor,
    };
    Ok((trajectory, report))
}

/// The rate factor of the protocol: `rho(A1 - J)`.
pub fn convergence_rate(a1: &DMatrix<f64>) -> Result<f64> {
    if a1.nrows() != a1.ncols() {
        return Err(Error::NotSquare {
            rows: a1.nrows(),
            cols: a1.ncols(),
        });
    }
    Ok(spectral_radius(&(a1 - agreement_matrix(a1.nrows())))?.value)
}

/// Fit `exp(slope)` of `log(error)` against the round index over the
/// geometric-decay window (rounds past 0 whose error is still above the
/// noise floor of 100 machine epsilons, relative to the largest error seen).
pub fn empirical_rate(t: &Trajectory) -> Result<f64> {
    let err_max = t.errors.iter().map(|&(_, e)| e).fold(0.0, f64::max);
    let floor = 100.0 * f64::EPSILON * err_max.max(1.0);
    let pts: Vec<(f64, f64)> = t
        .errors
        .iter()
        .filter(|&&(k, e)| k >= 1 && e > floor)
        .map(|&(k, e)| (k as f64, e.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::RateWindowTooShort(pts.len()));
    }
    let n = pts.len() as f64;
    let mean_k = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_k).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_k) * (p.1 - mean_y)).sum();
    Ok((sxy / sxx).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian_blocks, partition_agents};
    use approx::assert_abs_diff_eq;

    /// 2 followers (0,1), 2 leaders (2,3) with A1 uniform and A2 = I.
    fn two_by_two() -> (DiGraph, Partition, WeightMatrix) {
        let g = DiGraph::new(4, &[(0, 1), (1, 0), (2, 0), (3, 1)]).unwrap();
        let p = partition_agents(&g);
        let a1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let a2 = DMatrix::identity(2, 2);
        let w = WeightMatrix::push_sum(a1, a2, &g, &p).unwrap();
        (g, p, w)
    }

    #[test]
    fn round_matches_matrix_oracle() {
        let (_, _, w) = two_by_two();
        let x_f0 = DMatrix::zeros(2, 1);
        let x_l = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let st = PushSumState::init(&x_f0, &x_l);
        let next = push_sum_round(&st, &w).unwrap();
        assert_eq!(next.s_f(), &DMatrix::from_column_slice(2, 1, &[2.0, 4.0]));
        assert_eq!(next.w_f(), &DVector::from_column_slice(&[2.0, 2.0]));
        assert_eq!(next.x_f(), &DMatrix::from_column_slice(2, 1, &[1.0, 2.0]));
        // leaders unchanged
        assert_eq!(next.x_l(), st.x_l());
        assert_eq!(next.w_l(), st.w_l());
    }

    #[test]
    fn degenerate_weights_rejected_upstream() {
        let g = DiGraph::new(4, &[(0, 1), (1, 0), (2, 0), (3, 1)]).unwrap();
        let p = partition_agents(&g);
        // A1 = I, A2 = 0: A2 columns sum to 0, so validation refuses it
        let err = WeightMatrix::push_sum(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), &g, &p);
        assert!(matches!(err, Err(Error::InvalidWeightMatrix(_))));
    }

    #[test]
    fn push_sum_limit_is_leaders_average() {
        let (_, _, w) = two_by_two();
        let x_f0 = DMatrix::zeros(2, 1);
        let x_l = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let opts = RecordOptions {
            stride: 1000,
            snapshots: false,
        };
        let (_, report) = run_push_sum(&w, &x_f0, &x_l, 0.0, 300_000, &opts).unwrap();
        // the raw ratio carries a 1/k tail; 3e5 rounds bring it near 1e-5
        assert!(report.max_error_vs_leaders_average < 2e-5);
        // the increment-ratio limit estimate is geometric and lands on 3 exactly
        for r in 0..2 {
            assert_abs_diff_eq!(report.limit_estimate[(r, 0)], 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_leader_pins_the_limit() {
        let g = DiGraph::new(3, &[(0, 1), (1, 0), (2, 0)]).unwrap();
        let p = partition_agents(&g);
        let a1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let a2 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let w = WeightMatrix::push_sum(a1, a2, &g, &p).unwrap();
        let x_f0 = DMatrix::from_column_slice(2, 1, &[10.0, -4.0]);
        let x_l = DMatrix::from_column_slice(1, 1, &[7.5]);
        let (_, report) = run_push_sum(&w, &x_f0, &x_l, 0.0, 200_000, &Default::default()).unwrap();
        assert_abs_diff_eq!(report.limit_estimate[(0, 0)], 7.5, epsilon = 1e-9);
        assert_abs_diff_eq!(report.limit_estimate[(1, 0)], 7.5, epsilon = 1e-9);
    }

    #[test]
    fn leaders_average_values() {
        let x_l = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        assert_eq!(leaders_average(&x_l).unwrap()[0], 3.0);

        let x1 = [5.0, 3.0, 2.0, 2.0, 3.0, 5.0, 7.0, 8.0, 8.0, 7.0];
        let x2 = [1.0, 2.0, 4.0, 5.0, 7.0, 8.0, 7.0, 5.0, 4.0, 2.0];
        let mut x_l = DMatrix::zeros(10, 2);
        for i in 0..10 {
            x_l[(i, 0)] = x1[i];
            x_l[(i, 1)] = x2[i];
        }
        let avg = leaders_average(&x_l).unwrap();
        assert_eq!(avg[0], 5.0);
        assert_eq!(avg[1], 4.5);

        let single = DMatrix::from_column_slice(1, 1, &[-2.5]);
        assert_eq!(leaders_average(&single).unwrap()[0], -2.5);
        assert!(matches!(
            leaders_average(&DMatrix::zeros(0, 1)),
            Err(Error::NoLeaders)
        ));
    }

    #[test]
    fn laplacian_matrices_hand_instance() {
        let l = LaplacianBlocks {
            l1: DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            l2: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
        };
        let w = laplacian_protocol_matrices(&l, 0.25);
        assert_eq!(
            w.a1(),
            &DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.25, 0.5])
        );
        assert_eq!(
            w.a2(),
            &DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.25])
        );

        let w0 = laplacian_protocol_matrices(&l, 0.0);
        assert_eq!(w0.a1(), &DMatrix::identity(2, 2));
        assert_eq!(w0.a2(), &DMatrix::zeros(2, 2));

        // rows of [A1 A2] sum to 1 for any alpha
        for alpha in [0.1, 0.33, 2.0] {
            let w = laplacian_protocol_matrices(&l, alpha);
            for r in 0..2 {
                let total = w.a1().row(r).sum() + w.a2().row(r).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn max_stepsize_values() {
        let l1 = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        assert_abs_diff_eq!(max_stepsize(&l1).unwrap(), 2.0 / 3.0, epsilon = 1e-10);

        let scalar = DMatrix::from_element(1, 1, 4.0);
        assert_abs_diff_eq!(max_stepsize(&scalar).unwrap(), 0.5, epsilon = 1e-12);

        // complex eigenvalues 1 +- i: bound = 2*1/(1+1) = 1
        let rot = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(max_stepsize(&rot).unwrap(), 1.0, epsilon = 1e-10);

        let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(matches!(
            max_stepsize(&neg),
            Err(Error::NonPositiveEigenvalue(_))
        ));
    }

    #[test]
    fn fixed_point_hand_instance() {
        let l = LaplacianBlocks {
            l1: DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            l2: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
        };
        let x_l = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let fp = containment_fixed_point(&l, &x_l).unwrap();
        assert_abs_diff_eq!(fp[(0, 0)], 8.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fp[(1, 0)], 10.0 / 3.0, epsilon = 1e-12);
        // hull membership
        for v in fp.iter() {
            assert!(*v >= 2.0 - 1e-12 && *v <= 4.0 + 1e-12);
        }

        // all leaders equal -> all followers at that value
        let x_same = DMatrix::from_column_slice(2, 1, &[3.5, 3.5]);
        let fp = containment_fixed_point(&l, &x_same).unwrap();
        for v in fp.iter() {
            assert_abs_diff_eq!(*v, 3.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn laplacian_run_converges_below_bound() {
        let l = LaplacianBlocks {
            l1: DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            l2: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
        };
        let x_l = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let x_f0 = DMatrix::zeros(2, 1);
        let (_, report) =
            run_laplacian_containment(&l, 0.25, &x_f0, &x_l, 1e-12, 10_000, &Default::default())
                .unwrap();
        assert!(report.converged && report.stepsize_ok);
        assert!(report.max_error_vs_fixed_point.unwrap() <= 1e-10);
    }

    #[test]
    fn laplacian_run_diverges_above_bound() {
        let l = LaplacianBlocks {
            l1: DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            l2: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
        };
        let x_l = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let x_f0 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let (_, report) =
            run_laplacian_containment(&l, 0.7, &x_f0, &x_l, 1e-12, 200, &Default::default())
                .unwrap();
        assert!(!report.converged && !report.stepsize_ok);
        assert!(report.growth_factor.unwrap() > 1.0);
    }

    #[test]
    fn convergence_rate_values() {
        let q = 3;
        assert_abs_diff_eq!(
            convergence_rate(&agreement_matrix(q)).unwrap(),
            0.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            convergence_rate(&DMatrix::identity(q, q)).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        let m = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert_abs_diff_eq!(convergence_rate(&m).unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn empirical_rate_exact_geometric() {
        let errors: Vec<f64> = (0..14).map(|k| 0.5_f64.powi(k)).collect();
        let t = Trajectory::from_error_series(&errors);
        assert_abs_diff_eq!(empirical_rate(&t).unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn empirical_rate_constant_error() {
        let t = Trajectory::from_error_series(&[0.3; 15]);
        assert_abs_diff_eq!(empirical_rate(&t).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empirical_rate_rejects_converged_trajectory() {
        let t = Trajectory::from_error_series(&[0.0; 20]);
        assert!(matches!(
            empirical_rate(&t),
            Err(Error::RateWindowTooShort(_))
        ));
    }

    #[test]
    fn from_optimizer_cleans_dust_and_rejects_real_negatives() {
        let g = DiGraph::new(4, &[(0, 1), (1, 0), (2, 0), (3, 1)]).unwrap();
        let p = partition_agents(&g);
        let mut a1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        a1[(0, 1)] = 0.5 + 1e-10;
        a1[(1, 1)] = 0.5 - 1e-10;
        a1[(0, 0)] = 0.5 - 1e-10;
        a1[(1, 0)] = 0.5 + 1e-10;
        let w = WeightMatrix::from_optimizer(a1, DMatrix::identity(2, 2), &g, &p).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(w.a1().column(j).sum(), 1.0, epsilon = 1e-15);
        }

        let bad = DMatrix::from_row_slice(2, 2, &[1.1, -0.1, -0.1, 1.1]);
        assert!(matches!(
            WeightMatrix::from_optimizer(bad, DMatrix::identity(2, 2), &g, &p),
            Err(Error::InvalidWeightMatrix(_))
        ));
    }

    #[test]
    fn laplacian_fixed_point_matches_long_run() {
        let g = DiGraph::new(4, &[(0, 1), (1, 0), (2, 0), (3, 1)]).unwrap();
        let p = partition_agents(&g);
        let l = laplacian_blocks(&g, &p).unwrap();
        let x_l = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let (_, report) = run_laplacian_containment(
            &l,
            0.25,
            &DMatrix::zeros(2, 1),
            &x_l,
            1e-13,
            100_000,
            &RecordOptions {
                stride: 100,
                snapshots: false,
            },
        )
        .unwrap();
        let fp = containment_fixed_point(&l, &x_l).unwrap();
        for r in 0..2 {
            assert_abs_diff_eq!(report.final_x[(r, 0)], fp[(r, 0)], epsilon = 1e-10);
        }
    }
}
