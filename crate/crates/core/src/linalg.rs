//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff below which singular values are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;
/// Relative ridge added to Gram matrices before the Riesz solves.
pub const RIDGE_RTOL: f64 = 1e-10;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Moore-Penrose inverse of a symmetric positive semidefinite matrix.
///
/// Returns the inverse and its numerical rank.
pub fn sym_pinv(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let k = a.nrows();
    if k == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, &v| if v.abs() > m { v.abs() } else { m });
    let cutoff = PINV_RTOL * max;
    let mut out = DMatrix::zeros(k, k);
    let mut rank = 0;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            rank += 1;
            let u = eig.eigenvectors.column(j);
            out.ger(1.0 / lambda, &u, &u, 1.0);
        }
    }
    (out, rank)
}

/// Solves `a x = b` for symmetric `a`. When `a` is not numerically positive
/// definite the ridge floor `RIDGE_RTOL * trace(a) / k` is added to the
/// diagonal first.
pub fn solve_ridged(a: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    let k = a.nrows();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut m = (a + a.transpose()) * 0.5;
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let ridge = RIDGE_RTOL * a.trace().abs() / k as f64;
    for i in 0..k {
        m[(i, i)] += ridge;
    }
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => {
            let min = m
                .symmetric_eigenvalues()
                .iter()
                .fold(f64::INFINITY, |acc, &v| acc.min(v));
            Err(Error::Singular {
                context,
                min_eigenvalue: min,
            })
        }
    }
}
