//! Sample container shared by every estimator.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, check_len, Result};

/// A sample `(y1, y2, x)`: outcome, structural regressors and instruments.
///
/// Column 0 of `y2` is the coordinate whose average partial derivative is
/// the target parameter. Columns of `y2` and `x` may overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y1: DVector<f64>,
    pub y2: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y1: DVector<f64>, y2: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        check_len("dataset y2 rows", y1.len(), y2.nrows())?;
        check_len("dataset x rows", y1.len(), x.nrows())?;
        check_finite("dataset y1", y1.as_slice())?;
        check_finite("dataset y2", y2.as_slice())?;
        check_finite("dataset x", x.as_slice())?;
        Ok(Self { y1, y2, x })
    }

    pub fn len(&self) -> usize {
        self.y1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y1.is_empty()
    }

    /// Rows `idx` (in order) as a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            y1: select_vec(&self.y1, idx),
            y2: select_rows(&self.y2, idx),
            x: select_rows(&self.x, idx),
        }
    }
}

pub(crate) fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

pub(crate) fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub(crate) fn select_cols(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let n = m.nrows();
    let mut data = Vec::with_capacity(n * cols.len());
    for &c in cols {
        data.extend_from_slice(m.column(c).as_slice());
    }
    DMatrix::from_vec(n, cols.len(), data)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population-form variance (divides by `n`).
pub(crate) fn pop_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}
