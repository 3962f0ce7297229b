//! Dense linear-algebra kernels sized for desk-scale matrices (n up to ~100):
//! spectral radius with the full eigenvalue list, spectral norm with the top
//! singular pair, and linear solves with a condition guard.
//!
//! The kernels are backed by nalgebra's Schur and SVD decompositions; the
//! accuracy contracts (1e-9 on spectral quantities at this scale) hold with
//! plenty of margin.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

/// Iteration cap for the eigen/singular solvers.
pub const MAX_SPECTRAL_ITERS: usize = 10_000;

/// Condition-number estimate beyond which [`solve_linear`] refuses a system.
pub const MAX_CONDITION: f64 = 1e12;

/// Spectral quantity plus the certificate that produced it: the full complex
/// eigenvalue list for a radius computation, the top singular pair for a norm
/// computation.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub value: f64,
    pub eigenvalues: Vec<Complex<f64>>,
    /// `(left, right)` unit singular vectors of the largest singular value.
    pub singular_pair: Option<(DVector<f64>, DVector<f64>)>,
}

/// Checked row-major constructor: every entry must be finite.
pub fn dense(rows: usize, cols: usize, row_major: &[f64]) -> Result<DMatrix<f64>> {
    if row_major.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            row_major.len()
        )));
    }
    if row_major.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry);
    }
    Ok(DMatrix::from_row_slice(rows, cols, row_major))
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry);
    }
    Ok(())
}

/// The agreement matrix `J = (1/q) 11^T`.
pub fn agreement_matrix(q: usize) -> DMatrix<f64> {
    DMatrix::from_element(q, q, 1.0 / q as f64)
}

/// Spectral radius of a square matrix, with the full complex spectrum.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<SpectralResult> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    check_finite(m)?;
    if m.nrows() == 0 {
        return Ok(SpectralResult {
            value: 0.0,
            eigenvalues: vec![],
            singular_pair: None,
        });
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, MAX_SPECTRAL_ITERS)
        .ok_or(Error::IterationCap(MAX_SPECTRAL_ITERS))?;
    let eigenvalues: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    let value = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(SpectralResult {
        value,
        eigenvalues,
        singular_pair: None,
    })
}

/// Largest singular value with its unit left/right singular vectors.
///
/// Sign convention: the first component of the right vector whose magnitude
/// exceeds 1e-12 is made positive, so downstream subgradients are
/// deterministic.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<SpectralResult> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(SpectralResult {
            value: 0.0,
            eigenvalues: vec![],
            singular_pair: Some((DVector::zeros(m.nrows()), DVector::zeros(m.ncols()))),
        });
    }
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, true, f64::EPSILON, MAX_SPECTRAL_ITERS)
        .ok_or(Error::IterationCap(MAX_SPECTRAL_ITERS))?;
    let (top, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut left: DVector<f64> = u.column(top).into_owned();
    let mut right: DVector<f64> = v_t.row(top).transpose();
    if let Some(first) = right.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            left.neg_mut();
            right.neg_mut();
        }
    }
    Ok(SpectralResult {
        value: sigma,
        eigenvalues: vec![],
        singular_pair: Some((left, right)),
    })
}

/// Solve `A X = B` for square nonsingular `A`.
///
/// Refuses systems whose condition estimate (ratio of extreme singular
/// values) exceeds [`MAX_CONDITION`].
pub fn solve_linear(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{} but B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    check_finite(a)?;
    check_finite(b)?;
    let svd = nalgebra::linalg::SVD::try_new(a.clone(), true, true, f64::EPSILON, MAX_SPECTRAL_ITERS)
        .ok_or(Error::IterationCap(MAX_SPECTRAL_ITERS))?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let sigma_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if sigma_min > 0.0 {
        sigma_max / sigma_min
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::IllConditioned { cond });
    }
    svd.solve(b, 0.0)
        .map_err(|_| Error::IllConditioned { cond })
}
