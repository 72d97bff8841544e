//! Linear sieve bases and least-squares projection.
//!
//! Every basis is a list of product terms in the input columns, which makes
//! the analytic derivative with respect to input column 0 a by-product of
//! evaluation. Column ordering is frozen:
//!
//! * `Spline` / `Polynomial`: intercept (if enabled), then one block per
//!   selected coordinate in selection order, then pairwise raw products
//!   `x_a * x_b` for `a < b` in lexicographic order (if interactions are on).
//!   A spline block of order `k` with `m` knots is
//!   `x, x^2, .., x^(k-1), (x - t_1)_+^(k-1), .., (x - t_m)_+^(k-1)`;
//!   a polynomial block of degree `d` is `x, .., x^d`.
//! * `PaperPhi1`: the fixed 26-term quartic list on three inputs.
//! * `PaperPhi2`: `X~`, `X~^2`, then `X_i * X~_j` with `i` outer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{axpy, dot, PINV_RTOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Spline,
    Polynomial,
    PaperPhi1,
    PaperPhi2,
}

fn default_order() -> usize {
    3
}
fn default_knots() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_base() -> usize {
    3
}

/// Declarative description of a basis; serialized in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Spline order `k` (piecewise degree `k - 1`) or polynomial degree.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Number of interior knots (splines only).
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default)]
    pub interactions: bool,
    /// Input columns used; all columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<usize>>,
    #[serde(default = "default_true")]
    pub intercept: bool,
    /// `PaperPhi2` only: the first `base_dim` selected columns are `X`,
    /// the rest `X~`.
    #[serde(default = "default_base")]
    pub base_dim: usize,
}

impl BasisSpec {
    fn with_kind(kind: BasisKind, order: usize) -> Self {
        Self {
            kind,
            order,
            knots: 2,
            interactions: false,
            columns: None,
            intercept: true,
            base_dim: 3,
        }
    }

    /// `Spline(k, 2)`.
    pub fn spline(order: usize) -> Self {
        Self::with_kind(BasisKind::Spline, order)
    }

    pub fn polynomial(degree: usize) -> Self {
        Self::with_kind(BasisKind::Polynomial, degree)
    }

    pub fn phi1() -> Self {
        Self::with_kind(BasisKind::PaperPhi1, 4)
    }

    pub fn phi2() -> Self {
        let mut s = Self::with_kind(BasisKind::PaperPhi2, 2);
        s.intercept = false;
        s
    }

    pub fn with_interactions(mut self, on: bool) -> Self {
        self.interactions = on;
        self
    }

    pub fn on_columns(mut self, columns: Vec<usize>) -> Self {
        self.columns = Some(columns);
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    pub fn with_knots(mut self, knots: usize) -> Self {
        self.knots = knots;
        self
    }

    /// Number of design columns this spec produces for `input_dim` inputs.
    pub fn column_count(&self, input_dim: usize) -> usize {
        let d = self.columns.as_ref().map_or(input_dim, Vec::len);
        let icpt = usize::from(self.intercept);
        let pairs = if self.interactions { d * d.saturating_sub(1) / 2 } else { 0 };
        match self.kind {
            BasisKind::Spline => icpt + d * (self.order - 1 + self.knots) + pairs,
            BasisKind::Polynomial => icpt + d * self.order + pairs,
            BasisKind::PaperPhi1 => icpt + 25,
            BasisKind::PaperPhi2 => {
                let dt = d.saturating_sub(self.base_dim);
                2 * dt + self.base_dim * dt
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Factor {
    Pow(i32),
    Hinge { knot: f64, power: i32 },
}

impl Factor {
    #[inline]
    fn value(self, x: f64) -> f64 {
        match self {
            Factor::Pow(p) => x.powi(p),
            Factor::Hinge { knot, power } => {
                let z = x - knot;
                if z > 0.0 {
                    z.powi(power)
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Factor::Pow(0) => 0.0,
            Factor::Pow(p) => p as f64 * x.powi(p - 1),
            Factor::Hinge { knot, power } => {
                let z = x - knot;
                if z > 0.0 && power > 0 {
                    power as f64 * z.powi(power - 1)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Product of univariate factors; the empty product is the intercept.
#[derive(Clone, Debug, PartialEq)]
struct Term {
    factors: Vec<(usize, Factor)>,
}

impl Term {
    fn new(factors: Vec<(usize, Factor)>) -> Self {
        Self { factors }
    }

    fn single(col: usize, f: Factor) -> Self {
        Self::new(vec![(col, f)])
    }

    #[inline]
    fn value(&self, row: &[f64]) -> f64 {
        self.factors.iter().map(|&(c, f)| f.value(row[c])).product()
    }

    /// Partial derivative with respect to input column 0.
    #[inline]
    fn derivative0(&self, row: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, &(c, f)) in self.factors.iter().enumerate() {
            if c != 0 {
                continue;
            }
            let mut prod = f.derivative(row[c]);
            for (j, &(cj, fj)) in self.factors.iter().enumerate() {
                if j != i {
                    prod *= fj.value(row[cj]);
                }
            }
            total += prod;
        }
        total
    }
}

/// Evaluated design matrix, optionally with its derivative in input column 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub derivative1: Option<DMatrix<f64>>,
    pub specs: Vec<BasisSpec>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub(crate) fn require_derivative(&self) -> Result<&DMatrix<f64>> {
        self.derivative1
            .as_ref()
            .ok_or_else(|| Error::Invalid("design matrix lacks derivative1".into()))
    }
}

/// A basis whose data-dependent pieces (knots) have been frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedBasis {
    spec: BasisSpec,
    input_dim: usize,
    terms: Vec<Term>,
}

/// Type-7 sample quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Interior knots at the `j / (m + 1)` empirical quantiles of column `col`.
pub fn quantile_knots(data: &DMatrix<f64>, col: usize, count: usize) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = data.column(col).iter().copied().collect();
    v.sort_by(f64::total_cmp);
    if v.is_empty() || v[0] == v[v.len() - 1] {
        return Err(Error::KnotPlacement { column: col });
    }
    Ok((1..=count)
        .map(|j| quantile_sorted(&v, j as f64 / (count + 1) as f64))
        .collect())
}

fn pair_terms(cols: &[usize], terms: &mut Vec<Term>) {
    for a in 0..cols.len() {
        for b in (a + 1)..cols.len() {
            terms.push(Term::new(vec![
                (cols[a], Factor::Pow(1)),
                (cols[b], Factor::Pow(1)),
            ]));
        }
    }
}

fn phi1_terms(c: [usize; 3], intercept: bool) -> Vec<Term> {
    let [c1, c2, c3] = c;
    let h4 = |knot: f64| Factor::Hinge { knot, power: 4 };
    let mut t = Vec::with_capacity(26);
    if intercept {
        t.push(Term::new(Vec::new()));
    }
    for &(col, knot) in &[(c1, 0.5), (c2, 0.5)] {
        for p in 1..=4 {
            t.push(Term::single(col, Factor::Pow(p)));
        }
        t.push(Term::single(col, h4(knot)));
    }
    for p in 1..=4 {
        t.push(Term::single(c3, Factor::Pow(p)));
    }
    for &knot in &[0.1, 0.25, 0.5, 0.75, 0.9] {
        t.push(Term::single(c3, h4(knot)));
    }
    t.push(Term::new(vec![(c1, Factor::Pow(1)), (c3, Factor::Pow(1))]));
    t.push(Term::new(vec![(c2, Factor::Pow(1)), (c3, Factor::Pow(1))]));
    for &knot in &[0.25, 0.75] {
        t.push(Term::new(vec![(c1, Factor::Pow(1)), (c3, h4(knot))]));
        t.push(Term::new(vec![(c2, Factor::Pow(1)), (c3, h4(knot))]));
    }
    t
}

fn phi2_terms(base: &[usize], tilde: &[usize]) -> Vec<Term> {
    let mut t = Vec::new();
    for &j in tilde {
        t.push(Term::single(j, Factor::Pow(1)));
    }
    for &j in tilde {
        t.push(Term::single(j, Factor::Pow(2)));
    }
    for &i in base {
        for &j in tilde {
            t.push(Term::new(vec![(i, Factor::Pow(1)), (j, Factor::Pow(1))]));
        }
    }
    t
}

impl FittedBasis {
    /// Freezes `spec` on `data` (knots are placed from `data`).
    pub fn fit(data: &DMatrix<f64>, spec: &BasisSpec) -> Result<Self> {
        check_finite("basis input", data.as_slice())?;
        let input_dim = data.ncols();
        let cols: Vec<usize> = match &spec.columns {
            Some(c) => c.clone(),
            None => (0..input_dim).collect(),
        };
        if let Some(&bad) = cols.iter().find(|&&c| c >= input_dim) {
            return Err(Error::Invalid(format!(
                "basis column {bad} out of range for {input_dim} inputs"
            )));
        }
        let mut terms = Vec::new();
        match spec.kind {
            BasisKind::Spline | BasisKind::Polynomial => {
                if spec.order == 0 {
                    return Err(Error::Invalid("basis order must be at least 1".into()));
                }
                if spec.intercept {
                    terms.push(Term::new(Vec::new()));
                }
                for &c in &cols {
                    if spec.kind == BasisKind::Spline {
                        let k = spec.order as i32;
                        for p in 1..k {
                            terms.push(Term::single(c, Factor::Pow(p)));
                        }
                        for knot in quantile_knots(data, c, spec.knots)? {
                            terms.push(Term::single(c, Factor::Hinge { knot, power: k - 1 }));
                        }
                    } else {
                        for p in 1..=spec.order as i32 {
                            terms.push(Term::single(c, Factor::Pow(p)));
                        }
                    }
                }
                if spec.interactions {
                    pair_terms(&cols, &mut terms);
                }
            }
            BasisKind::PaperPhi1 => {
                check_len("phi1 input columns", 3, cols.len())?;
                terms = phi1_terms([cols[0], cols[1], cols[2]], spec.intercept);
            }
            BasisKind::PaperPhi2 => {
                if cols.len() < spec.base_dim {
                    return Err(Error::Invalid(format!(
                        "phi2 needs at least {} base columns, got {}",
                        spec.base_dim,
                        cols.len()
                    )));
                }
                let (base, tilde) = cols.split_at(spec.base_dim);
                terms = phi2_terms(base, tilde);
            }
        }
        Ok(Self {
            spec: spec.clone(),
            input_dim,
            terms,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn ncols(&self) -> usize {
        self.terms.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Writes values (and derivatives) into column block starting at `offset`.
    fn fill(
        &self,
        data: &DMatrix<f64>,
        values: &mut DMatrix<f64>,
        mut deriv: Option<&mut DMatrix<f64>>,
        offset: usize,
    ) {
        let mut row = vec![0.0; data.ncols()];
        for i in 0..data.nrows() {
            for (c, r) in row.iter_mut().enumerate() {
                *r = data[(i, c)];
            }
            for (j, term) in self.terms.iter().enumerate() {
                values[(i, offset + j)] = term.value(&row);
                if let Some(d) = deriv.as_deref_mut() {
                    d[(i, offset + j)] = term.derivative0(&row);
                }
            }
        }
    }

    pub fn design(&self, data: &DMatrix<f64>, with_derivative: bool) -> Result<DesignMatrix> {
        Sieve::from_parts(alloc::vec![self.clone()]).design(data, with_derivative)
    }
}

/// Horizontal concatenation of fitted bases.
#[derive(Clone, Debug, PartialEq)]
pub struct Sieve {
    parts: Vec<FittedBasis>,
}

impl Sieve {
    pub fn fit(data: &DMatrix<f64>, specs: &[BasisSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Invalid("empty basis list".into()));
        }
        let parts = specs
            .iter()
            .map(|s| FittedBasis::fit(data, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { parts })
    }

    pub fn from_parts(parts: Vec<FittedBasis>) -> Self {
        Self { parts }
    }

    pub fn ncols(&self) -> usize {
        self.parts.iter().map(FittedBasis::ncols).sum()
    }

    pub fn specs(&self) -> Vec<BasisSpec> {
        self.parts.iter().map(|p| p.spec.clone()).collect()
    }

    pub fn design(&self, data: &DMatrix<f64>, with_derivative: bool) -> Result<DesignMatrix> {
        check_finite("basis input", data.as_slice())?;
        for p in &self.parts {
            check_len("basis input columns", p.input_dim, data.ncols())?;
        }
        let n = data.nrows();
        let k = self.ncols();
        let mut values = DMatrix::zeros(n, k);
        let mut deriv = with_derivative.then(|| DMatrix::zeros(n, k));
        let mut offset = 0;
        for p in &self.parts {
            p.fill(data, &mut values, deriv.as_mut(), offset);
            offset += p.ncols();
        }
        check_finite("design matrix", values.as_slice())?;
        Ok(DesignMatrix {
            values,
            derivative1: deriv,
            specs: self.specs(),
        })
    }
}

/// Fits knots on `data` and evaluates a single spline/polynomial spec.
pub fn build_spline_basis(
    data: &DMatrix<f64>,
    spec: &BasisSpec,
    with_derivative: bool,
) -> Result<DesignMatrix> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::Invalid("basis input must be non-empty".into()));
    }
    FittedBasis::fit(data, spec)?.design(data, with_derivative)
}

/// The fixed 26-term instrument basis on `(X1, X2, X3)`.
pub fn build_phi1_basis(x123: &DMatrix<f64>) -> Result<DesignMatrix> {
    check_len("phi1 input columns", 3, x123.ncols())?;
    FittedBasis::fit(x123, &BasisSpec::phi1())?.design(x123, false)
}

/// `[X~, X~^2, (X_i X~_j)]`; an empty `xtilde` gives a zero-column matrix.
pub fn build_phi2_basis(x: &DMatrix<f64>, xtilde: &DMatrix<f64>) -> Result<DesignMatrix> {
    check_len("phi2 rows", x.nrows(), xtilde.nrows())?;
    let q = x.ncols();
    let joined = DMatrix::from_fn(x.nrows(), q + xtilde.ncols(), |i, j| {
        if j < q {
            x[(i, j)]
        } else {
            xtilde[(i, j - q)]
        }
    });
    let mut spec = BasisSpec::phi2();
    spec.base_dim = q;
    FittedBasis::fit(&joined, &spec)?.design(&joined, false)
}

/// Orthogonal projection onto the column space of a basis matrix `B`.
///
/// Built from a complete orthogonal decomposition of `B` (column-pivoted QR);
/// directions whose pivot falls below `1e-10` times the largest are dropped,
/// so `P = B (B'B)^+ B'` holds for rank-deficient `B` as well.
#[derive(Clone, Debug)]
pub struct Projector {
    /// Orthonormal basis of the retained column space (`n x r`).
    q: DMatrix<f64>,
    /// `Pi Z T'^{-1}` (`K x r`), maps `Q' v` to minimum-norm least-squares coefficients.
    coef_map: DMatrix<f64>,
    ncols: usize,
    /// `P = I_n` without storing a basis (regression problems).
    identity: bool,
}

impl Projector {
    pub fn new(basis: &DMatrix<f64>) -> Result<Self> {
        check_finite("projector basis", basis.as_slice())?;
        let (n, k) = basis.shape();
        if n == 0 {
            return Err(Error::Invalid("projector needs at least one row".into()));
        }
        if k == 0 {
            return Ok(Self {
                q: DMatrix::zeros(n, 0),
                coef_map: DMatrix::zeros(0, 0),
                ncols: 0,
                identity: false,
            });
        }
        // Complete orthogonal decomposition: B Pi = Q R by column-pivoted
        // Householder QR, then R_r' = Z T for the retained rows of R.
        let qr = basis.clone().col_piv_qr();
        let r_full = qr.r();
        let q_full = qr.q();
        let rmax = r_full[(0, 0)].abs();
        let rank = (0..r_full.nrows())
            .take_while(|&j| rmax > 0.0 && r_full[(j, j)].abs() > PINV_RTOL * rmax)
            .count();
        if rank < k {
            log::debug!("projector basis rank {rank} < {k} columns");
        }
        let q = q_full.columns(0, rank).into_owned();
        let mut coef_map = DMatrix::zeros(k, rank);
        if rank > 0 {
            let lq = r_full.rows(0, rank).transpose().qr();
            let z = lq.q();
            let t = lq.r();
            // Z T'^{-1} = (T^{-1} Z')'.
            let tz = t
                .solve_upper_triangular(&z.transpose())
                .ok_or_else(|| Error::Invalid("projector: singular triangular factor".into()))?;
            coef_map = tz.transpose();
            qr.p().inv_permute_rows(&mut coef_map);
        }
        Ok(Self {
            q,
            coef_map,
            ncols: k,
            identity: false,
        })
    }

    /// `P = I_n`: the SMD criterion becomes least squares.
    pub fn identity(n: usize) -> Self {
        Self {
            q: DMatrix::zeros(n, 0),
            coef_map: DMatrix::zeros(0, 0),
            ncols: n,
            identity: true,
        }
    }

    pub fn from_design(design: &DesignMatrix) -> Result<Self> {
        Self::new(&design.values)
    }

    pub fn nrows(&self) -> usize {
        self.q.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rank(&self) -> usize {
        if self.identity {
            self.nrows()
        } else {
            self.q.ncols()
        }
    }

    /// `Q' v`, the coordinates of `v` in the orthonormal basis.
    fn reduce(&self, v: &[f64]) -> Vec<f64> {
        let n = self.nrows();
        let qs = self.q.as_slice();
        (0..self.rank())
            .map(|j| dot(&qs[j * n..(j + 1) * n], v))
            .collect()
    }

    fn expand(&self, c: &[f64], out: &mut [f64]) {
        let n = self.nrows();
        let qs = self.q.as_slice();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &cj) in c.iter().enumerate() {
            axpy(cj, &qs[j * n..(j + 1) * n], out);
        }
    }

    /// `P v` written into `out`; both slices have length `n`.
    pub fn project_into(&self, v: &[f64], out: &mut [f64]) {
        if self.identity {
            out.copy_from_slice(v);
            return;
        }
        let c = self.reduce(v);
        self.expand(&c, out);
    }

    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("projection input", self.nrows(), v.len())?;
        let mut out = DVector::zeros(v.len());
        self.project_into(v.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub fn project_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("projection input", self.nrows(), m.nrows())?;
        let n = self.nrows();
        let mut out = DMatrix::zeros(n, m.ncols());
        for j in 0..m.ncols() {
            let src = &m.as_slice()[j * n..(j + 1) * n];
            let dst = &mut out.as_mut_slice()[j * n..(j + 1) * n];
            self.project_into(src, dst);
        }
        Ok(out)
    }

    /// Minimum-norm least-squares coefficients `B^+ v`.
    pub fn coefficients(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("projection input", self.nrows(), v.len())?;
        if self.identity {
            return Ok(v.clone());
        }
        let c = DVector::from_vec(self.reduce(v.as_slice()));
        Ok(&self.coef_map * c)
    }

    /// Dense `n x n` projection matrix (for checks on small problems).
    pub fn matrix(&self) -> DMatrix<f64> {
        if self.identity {
            return DMatrix::identity(self.nrows(), self.nrows());
        }
        &self.q * self.q.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        let d = rows[0].len();
        DMatrix::from_fn(n, d, |i, j| rows[i][j])
    }

    #[test]
    fn linear_spline_hinges_vanish_below_knots() {
        // Knots (1, 2) arise as the 1/3 and 2/3 quantiles of 0..=3.
        let data = mat(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let fitted = FittedBasis::fit(&data, &BasisSpec::spline(2)).unwrap();
        let dm = fitted.design(&data, false).unwrap();
        assert_eq!(dm.values.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(dm.values.row(3).iter().copied().collect::<Vec<_>>(), vec![1.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn product_column_derivative_is_other_coordinate() {
        let data = mat(&[&[3.0, 5.0], &[1.0, 2.0], &[0.5, -1.0], &[2.0, 0.0]]);
        let spec = BasisSpec::polynomial(1).with_interactions(true);
        let dm = build_spline_basis(&data, &spec, true).unwrap();
        let d = dm.derivative1.unwrap();
        // intercept, x1, x2, x1*x2
        assert_eq!(d[(0, 3)], 5.0);
        assert_eq!(d[(0, 2)], 0.0);
        assert_eq!(d[(0, 1)], 1.0);
    }

    #[test]
    fn zero_variance_column_names_column() {
        let data = mat(&[&[1.0, 2.0], &[2.0, 2.0], &[3.0, 2.0]]);
        let err = build_spline_basis(&data, &BasisSpec::spline(3), false).unwrap_err();
        assert_eq!(err, Error::KnotPlacement { column: 1 });
    }

    #[test]
    fn non_finite_input_rejected() {
        let data = mat(&[&[1.0], &[f64::NAN], &[3.0]]);
        assert!(matches!(
            build_spline_basis(&data, &BasisSpec::spline(3), false),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn phi1_origin_and_unit_rows() {
        let x = mat(&[&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]]);
        let dm = build_phi1_basis(&x).unwrap();
        assert_eq!(dm.ncols(), 26);
        let origin: Vec<f64> = dm.values.row(0).iter().copied().collect();
        assert_eq!(origin[0], 1.0);
        assert!(origin[1..].iter().all(|&v| v == 0.0));
        // (X3 - 0.9)_+^4 is column 19 in the frozen order.
        assert!((dm.values[(1, 19)] - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn phi1_rejects_wrong_width() {
        let x = mat(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!(matches!(build_phi1_basis(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn phi2_counts() {
        let x = DMatrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let empty = DMatrix::zeros(4, 0);
        assert_eq!(build_phi2_basis(&x, &empty).unwrap().ncols(), 0);
        let xt = DMatrix::from_fn(4, 5, |i, j| (i * j) as f64 * 0.1);
        assert_eq!(build_phi2_basis(&x, &xt).unwrap().ncols(), 25);
    }

    #[test]
    fn projector_fixes_range_and_kills_orthogonal() {
        let b = mat(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0], &[1.0, 3.0]]);
        let p = Projector::new(&b).unwrap();
        let inside = DVector::from_vec(vec![2.0, 3.0, 4.0, 5.0]);
        let pv = p.project(&inside).unwrap();
        assert!((pv - &inside).amax() < 1e-12);
        // Orthogonal to both [1,1,1,1] and [0,1,2,3].
        let orth = DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0]);
        assert!(p.project(&orth).unwrap().amax() < 1e-12);
        assert!(p.project(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn coefficients_recover_linear_fit() {
        let b = mat(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0]]);
        let p = Projector::new(&b).unwrap();
        let c = p.coefficients(&DVector::from_vec(vec![1.0, 3.0, 5.0])).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
    }
}
