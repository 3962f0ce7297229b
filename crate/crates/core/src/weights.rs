//! Weight design on the follower subgraph: the affine feasible set (doubly
//! stochastic row/column sums plus a sparsity pattern), exact Euclidean
//! projection onto it, a projected-subgradient minimizer of the spectral-norm
//! objective, and the weight-balancing baseline.
//!
//! The feasible set is affine: no entrywise nonnegativity is imposed, so
//! optimizer outputs may carry small negative entries. [`check_doubly_stochastic`]
//! reports the minimum entry and the push-sum engine refuses negative
//! matrices, so the conflict surfaces explicitly instead of being clipped
//! away.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{diameter, is_strongly_connected, DiGraph};
use crate::matrixops::{agreement_matrix, spectral_norm};

/// Residual level at which a projected point is flagged feasible.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Residual level beyond which the projection declares the pattern
/// infeasible (the KKT system was inconsistent).
pub const INFEASIBILITY_TOL: f64 = 1e-8;

/// Boolean q-by-q mask of admissible entries: `(i, j)` is allowed iff agent
/// `i` reads agent `j` in the follower subgraph, or `i = j` (self-weights are
/// always allowed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    q: usize,
    allowed: Vec<bool>,
}

impl SparsityPattern {
    /// Diagonal plus the follower-subgraph edges `(j -> i)`.
    pub fn from_follower_graph(gf: &DiGraph) -> Self {
        let q = gf.n();
        let mut allowed = vec![false; q * q];
        for i in 0..q {
            allowed[i * q + i] = true;
            for &j in gf.in_neighbors(i) {
                allowed[i * q + j] = true;
            }
        }
        SparsityPattern { q, allowed }
    }

    /// Fully dense pattern.
    pub fn full(q: usize) -> Self {
        SparsityPattern {
            q,
            allowed: vec![true; q * q],
        }
    }

    /// Pattern with the given row kept and every other row fully relaxed.
    ///
    /// This is the constraint set a single agent owns in the distributed
    /// formulation: it can enforce the topology on its own row only.
    pub fn relax_except_row(&self, row: usize) -> SparsityPattern {
        let mut allowed = vec![true; self.q * self.q];
        allowed[row * self.q..(row + 1) * self.q]
            .copy_from_slice(&self.allowed[row * self.q..(row + 1) * self.q]);
        SparsityPattern {
            q: self.q,
            allowed,
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.q + j]
    }

    pub fn allowed_count(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }
}

/// A matrix returned by the projection, with its feasibility residuals.
#[derive(Debug, Clone)]
pub struct FeasiblePoint {
    pub matrix: DMatrix<f64>,
    pub row_residual: f64,
    pub col_residual: f64,
    pub sparsity_residual: f64,
    pub feasible: bool,
}

/// Exact Euclidean projector onto
/// `{Y : Y1 = 1, Y^T 1 = 1, Y = 0 off pattern}`.
///
/// The equality-constrained least-squares KKT system over the free entries
/// has Gram matrix `G = E E^T` of size 2q; its pseudo-inverse is computed
/// once at construction, so each projection is a couple of small
/// matrix-vector products. The 2q constraints carry exactly one dependency
/// (total row mass equals total column mass), hence 2q-1 independent ones on
/// connected patterns.
#[derive(Debug, Clone)]
pub struct Projector {
    pattern: SparsityPattern,
    free: Vec<(usize, usize)>,
    gram_pinv: DMatrix<f64>,
}

impl Projector {
    pub fn new(pattern: &SparsityPattern) -> Result<Self> {
        let q = pattern.q();
        for i in 0..q {
            if !(0..q).any(|j| pattern.is_allowed(i, j)) {
                return Err(Error::EmptyPatternRow(i));
            }
        }
        for j in 0..q {
            if !(0..q).any(|i| pattern.is_allowed(i, j)) {
                return Err(Error::EmptyPatternColumn(j));
            }
        }
        let mut free = Vec::with_capacity(pattern.allowed_count());
        for i in 0..q {
            for j in 0..q {
                if pattern.is_allowed(i, j) {
                    free.push((i, j));
                }
            }
        }
        // G = [[diag(row counts), N], [N^T, diag(col counts)]] with
        // N[i][j] = 1 iff (i,j) allowed.
        let mut gram: DMatrix<f64> = DMatrix::zeros(2 * q, 2 * q);
        for &(i, j) in &free {
            gram[(i, i)] += 1.0;
            gram[(q + j, q + j)] += 1.0;
            gram[(i, q + j)] += 1.0;
            gram[(q + j, i)] += 1.0;
        }
        let svd = nalgebra::linalg::SVD::try_new(gram, true, true, f64::EPSILON, 10_000)
            .ok_or(Error::IterationCap(10_000))?;
        let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let cutoff = sigma_max * 1e-12;
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let mut inv_sigma: DMatrix<f64> = DMatrix::zeros(2 * q, 2 * q);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > cutoff {
                inv_sigma[(k, k)] = 1.0 / s;
            }
        }
        let gram_pinv = v_t.transpose() * inv_sigma * u.transpose();
        Ok(Projector {
            pattern: pattern.clone(),
            free,
            gram_pinv,
        })
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    /// Project `x`; errors only when the pattern admits no doubly stochastic
    /// matrix (the KKT system is inconsistent beyond [`INFEASIBILITY_TOL`]).
    pub fn project(&self, x: &DMatrix<f64>) -> Result<FeasiblePoint> {
        let q = self.pattern.q();
        assert_eq!((x.nrows(), x.ncols()), (q, q), "projector dimension mismatch");
        // residual of E xf = b
        let mut r = DMatrix::zeros(2 * q, 1);
        for c in 0..2 * q {
            r[(c, 0)] = 1.0;
        }
        for &(i, j) in &self.free {
            let v = x[(i, j)];
            r[(i, 0)] -= v;
            r[(q + j, 0)] -= v;
        }
        let lambda = &self.gram_pinv * &r;
        let mut y = DMatrix::zeros(q, q);
        for &(i, j) in &self.free {
            y[(i, j)] = x[(i, j)] + lambda[(i, 0)] + lambda[(q + j, 0)];
        }
        let row_residual = (0..q)
            .map(|i| (y.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let col_residual = (0..q)
            .map(|j| (y.column(j).sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let residual = row_residual.max(col_residual);
        if residual > INFEASIBILITY_TOL {
            return Err(Error::PatternInfeasible { residual });
        }
        Ok(FeasiblePoint {
            matrix: y,
            row_residual,
            col_residual,
            sparsity_residual: 0.0,
            feasible: residual <= FEASIBILITY_TOL,
        })
    }
}

/// One-shot exact projection onto the pattern's affine feasible set.
pub fn project_affine(x: &DMatrix<f64>, pattern: &SparsityPattern) -> Result<FeasiblePoint> {
    Projector::new(pattern)?.project(x)
}

/// The design objective `||X - J||_2` with `J = (1/q) 11^T`.
pub fn objective(x: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() != x.ncols() {
        return Err(Error::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    Ok(spectral_norm(&(x - agreement_matrix(x.nrows())))?.value)
}

/// Subgradient of [`objective`] at `x`: the rank-one matrix `u1 v1^T` built
/// from the top singular pair of `X - J`, or zero at `X = J`.
pub fn norm_subgradient(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != x.ncols() {
        return Err(Error::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    let q = x.nrows();
    let res = spectral_norm(&(x - agreement_matrix(q)))?;
    if res.value <= 1e-15 {
        return Ok(DMatrix::zeros(q, q));
    }
    let (u, v) = res.singular_pair.expect("norm computes the pair");
    Ok(u * v.transpose())
}

/// Configuration for the centralized projected-subgradient solver.
#[derive(Debug, Clone)]
pub struct CentralizedConfig {
    /// Iteration budget.
    pub max_iters: usize,
    /// Step schedule is `eta0 / sqrt(t + 1)`.
    pub eta0: f64,
    /// Improvement threshold for plateau detection.
    pub tol: f64,
    /// Stop once the best objective has not improved by more than `tol`
    /// over this many iterations.
    pub plateau_window: usize,
}

impl Default for CentralizedConfig {
    fn default() -> Self {
        CentralizedConfig {
            max_iters: 5000,
            eta0: 1.0,
            tol: 1e-6,
            plateau_window: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub a1: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before a plateau.
    pub converged: bool,
}

/// Minimize `||X - J||_2` over the pattern's affine feasible set by projected
/// subgradient descent; returns the best iterate seen.
pub fn solve_centralized(
    pattern: &SparsityPattern,
    cfg: &CentralizedConfig,
) -> Result<CentralizedSolution> {
    let projector = Projector::new(pattern)?;
    let q = pattern.q();
    let mut x = projector.project(&agreement_matrix(q))?.matrix;
    let mut best = objective(&x)?;
    let mut best_x = x.clone();
    let mut last_significant = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    for t in 0..cfg.max_iters {
        iterations = t + 1;
        let g = norm_subgradient(&x)?;
        let eta = cfg.eta0 / ((t + 1) as f64).sqrt();
        x = projector.project(&(&x - g * eta))?.matrix;
        let f = objective(&x)?;
        if f < best {
            if best - f > cfg.tol {
                last_significant = t;
            }
            best = f;
            best_x = x.clone();
        }
        if t - last_significant >= cfg.plateau_window {
            converged = true;
            break;
        }
    }
    Ok(CentralizedSolution {
        a1: best_x,
        objective: best,
        iterations,
        converged,
    })
}

/// Node-weight initialization used by the balancing recursion and the
/// distributed optimizer's inner loop: `(1/d*)^(2D+1)`.
pub fn balancing_init_bound(gf: &DiGraph) -> Result<f64> {
    let d_star = (0..gf.n()).map(|i| gf.out_degree(i)).max().unwrap_or(0);
    if d_star == 0 {
        return Ok(1.0);
    }
    let d = diameter(gf)?;
    Ok((1.0 / d_star as f64).powi(2 * d as i32 + 1))
}

#[derive(Debug, Clone)]
pub struct WbaSolution {
    /// Column-stochastic mixing matrix; doubly stochastic at the fixed point.
    pub matrix: DMatrix<f64>,
    pub node_weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Weight-balancing baseline: iterate the node-weight recursion
/// `v_i <- (v_i + (1/d_i) sum_in v_j) / 2` to a fixed point, then assemble
/// `P` with `P_ij = v*_j` on edges and `P_ii = 1 - d_i v*_i`.
pub fn wba_weights(
    gf: &DiGraph,
    v0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<WbaSolution> {
    let q = gf.n();
    if !is_strongly_connected(gf) {
        return Err(Error::NotStronglyConnected);
    }
    if q == 1 {
        return Ok(WbaSolution {
            matrix: DMatrix::from_element(1, 1, 1.0),
            node_weights: vec![v0.map(|v| v[0]).unwrap_or(1.0)],
            iterations: 0,
            converged: true,
        });
    }
    let mut v: Vec<f64> = match v0 {
        Some(v0) => {
            if v0.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "expected {q} node weights, got {}",
                    v0.len()
                )));
            }
            if v0.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::InvalidWeightMatrix(
                    "initial node weights must be positive".into(),
                ));
            }
            v0.to_vec()
        }
        None => vec![balancing_init_bound(gf)?; q],
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut next = vec![0.0; q];
    for _ in 0..max_iter {
        iterations += 1;
        for i in 0..q {
            let incoming: f64 = gf.in_neighbors(i).iter().map(|&j| v[j]).sum();
            next[i] = 0.5 * (v[i] + incoming / gf.out_degree(i) as f64);
        }
        for i in 0..q {
            let self_weight = 1.0 - gf.out_degree(i) as f64 * next[i];
            if self_weight < 0.0 {
                return Err(Error::NegativeSelfWeight {
                    agent: i,
                    value: self_weight,
                });
            }
        }
        let delta = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if delta < tol {
            converged = true;
            break;
        }
    }
    let mut p = DMatrix::zeros(q, q);
    for i in 0..q {
        for &j in gf.in_neighbors(i) {
            p[(i, j)] = v[j];
        }
        p[(i, i)] = 1.0 - gf.out_degree(i) as f64 * v[i];
    }
    Ok(WbaSolution {
        matrix: p,
        node_weights: v,
        iterations,
        converged,
    })
}

/// Stochasticity diagnostics for a candidate weight matrix.
#[derive(Debug, Clone)]
pub struct StochasticityReport {
    pub max_row_deviation: f64,
    pub max_col_deviation: f64,
    pub min_entry: f64,
    /// Largest magnitude found on a disallowed entry, when a pattern is given.
    pub max_off_pattern: Option<f64>,
    pub tol: f64,
}

impl StochasticityReport {
    pub fn is_doubly_stochastic(&self) -> bool {
        self.max_row_deviation <= self.tol
            && self.max_col_deviation <= self.tol
            && self.max_off_pattern.map_or(true, |v| v <= self.tol)
    }
}

/// Report row/column-sum deviations, the minimum entry, and (optionally)
/// sparsity violations of `x`.
pub fn check_doubly_stochastic(
    x: &DMatrix<f64>,
    tol: f64,
    pattern: Option<&SparsityPattern>,
) -> StochasticityReport {
    let q = x.nrows();
    let max_row_deviation = (0..q)
        .map(|i| (x.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let max_col_deviation = (0..x.ncols())
        .map(|j| (x.column(j).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let min_entry = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max_off_pattern = pattern.map(|p| {
        let mut worst = 0.0_f64;
        for i in 0..q {
            for j in 0..x.ncols() {
                if !p.is_allowed(i, j) {
                    worst = worst.max(x[(i, j)].abs());
                }
            }
        }
        worst
    });
    StochasticityReport {
        max_row_deviation,
        max_col_deviation,
        min_entry,
        max_off_pattern,
        tol,
    }
}
