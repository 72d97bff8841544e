//! Nuisance estimators: conditional variance `Sigma(x)`, the projection
//! coefficient `Gamma(x)`, and sieve Riesz representers.
//!
//! Sign convention: `v*` always denotes the representer of `h -> E[grad1 h]`
//! itself (identity case `v* = -w* / (1 + E[grad1 w*])`), so the identity
//! score uses `kappa = -E[v* | X]` and the efficient score uses
//! `kappa = Gamma - E[v* | X] / Sigma`.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{mean, pop_variance};
use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{solve_ridged, sym_pinv};
use crate::sieve::{DesignMatrix, Projector};

/// Lower bound applied to every conditional-variance estimate.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Lower bound applied to `sigma0^2`.
pub const SIGMA0_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CondVarMethod {
    Knn(usize),
    Projection,
    /// Supplied externally (a simulation oracle).
    Oracle,
    /// `Sigma = 1`.
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondVarEstimate {
    pub values: DVector<f64>,
    pub method: CondVarMethod,
}

impl CondVarEstimate {
    pub fn identity(n: usize) -> Self {
        Self {
            values: DVector::from_element(n, 1.0),
            method: CondVarMethod::Identity,
        }
    }

    /// Wraps externally known variances, applying the floor.
    pub fn oracle(values: DVector<f64>) -> Result<Self> {
        check_finite("oracle variance", values.as_slice())?;
        Ok(Self {
            values: values.map(|v| v.max(SIGMA_FLOOR)),
            method: CondVarMethod::Oracle,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn inverse(&self) -> DVector<f64> {
        self.values.map(|v| 1.0 / v)
    }
}

fn standardized(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = x.clone();
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let sd = libm::sqrt(pop_variance(&col));
        if sd > 0.0 {
            z.column_mut(j).iter_mut().for_each(|v| *v /= sd);
        }
    }
    z
}

/// k-nearest-neighbour average of squared residuals.
///
/// Distances are Euclidean on columns scaled to unit sample SD; each point
/// is its own neighbour and ties are broken by row index.
pub fn estimate_sigma_knn(
    x: &DMatrix<f64>,
    squared_residuals: &DVector<f64>,
    k: usize,
) -> Result<CondVarEstimate> {
    let n = x.nrows();
    check_len("knn residuals", n, squared_residuals.len())?;
    check_finite("knn inputs", x.as_slice())?;
    check_finite("knn residuals", squared_residuals.as_slice())?;
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("knn needs 1 <= k <= n, got k={k}, n={n}")));
    }
    let d = x.ncols();
    let z = standardized(x);
    // Row-major copy for contiguous distance loops.
    let mut rows = alloc::vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            rows[i * d + j] = z[(i, j)];
        }
    }
    let mut values = DVector::zeros(n);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    for i in 0..n {
        let zi = &rows[i * d..(i + 1) * d];
        dist.clear();
        for j in 0..n {
            let zj = &rows[j * d..(j + 1) * d];
            let s: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
            dist.push((s, j));
        }
        if k < n {
            dist.select_nth_unstable_by(k - 1, by_dist);
        }
        let total: f64 = dist[..k].iter().map(|&(_, j)| squared_residuals[j]).sum();
        values[i] = (total / k as f64).max(SIGMA_FLOOR);
    }
    Ok(CondVarEstimate {
        values,
        method: CondVarMethod::Knn(k),
    })
}

/// Fitted values of the squared residuals projected on the instrument basis.
pub fn estimate_sigma_projection(
    p_basis: &Projector,
    squared_residuals: &DVector<f64>,
) -> Result<CondVarEstimate> {
    check_finite("projection residuals", squared_residuals.as_slice())?;
    let fitted = p_basis.project(squared_residuals)?;
    Ok(CondVarEstimate {
        values: fitted.map(|v| v.max(SIGMA_FLOOR)),
        method: CondVarMethod::Projection,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaEstimate {
    pub values: DVector<f64>,
}

impl GammaEstimate {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: DVector::zeros(n),
        }
    }
}

/// `Gamma = P_phi[ Sigma^{-1} * P_phi u ]` with
/// `u = (grad1 h - theta_prelim) * (resid - mean(resid))`.
pub fn estimate_gamma(
    p_phi: &Projector,
    grad1_h: &DVector<f64>,
    theta_prelim: f64,
    resid: &DVector<f64>,
    sigma: &CondVarEstimate,
) -> Result<GammaEstimate> {
    let n = grad1_h.len();
    check_len("gamma residuals", n, resid.len())?;
    check_len("gamma sigma", n, sigma.len())?;
    if sigma.values.iter().any(|&s| s <= 0.0) {
        return Err(Error::Invalid("gamma needs a positive Sigma".into()));
    }
    let rbar = mean(resid.as_slice());
    let u = DVector::from_fn(n, |i, _| (grad1_h[i] - theta_prelim) * (resid[i] - rbar));
    let pu = p_phi.project(&u)?;
    let weighted = pu.component_div(&sigma.values);
    Ok(GammaEstimate {
        values: p_phi.project(&weighted)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RieszMode {
    IdentityWeight,
    OptimalWeight,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RieszEstimate {
    pub mode: RieszMode,
    /// Coefficients of `v*` on the basis `nu`.
    pub beta: DVector<f64>,
    /// Identity mode: coefficients of `w*`.
    pub w_beta: Option<DVector<f64>>,
    /// Identity mode: column means of `grad1 nu`; optimal mode: `F`.
    pub f: DVector<f64>,
    /// Optimal mode: `R`.
    pub r: Option<DMatrix<f64>>,
    /// `v*` at the sample points.
    pub v_star: DVector<f64>,
    /// Identity mode: `w*` at the sample points.
    pub w_star: Option<DVector<f64>>,
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / n)
}

/// Gram matrix `(P nu)'(P nu) / n` and `P nu`.
fn projected_gram(nu: &DMatrix<f64>, p: &Projector) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let pnu = p.project_matrix(nu)?;
    let n = nu.nrows() as f64;
    Ok((pnu.transpose() * &pnu / n, pnu))
}

/// Closed-form minimizer of
/// `Q(beta) = (1/n) |P nu beta|^2 + (1 + mean(grad1 nu) beta)^2`.
pub fn riesz_identity(nu: &DesignMatrix, p_lambda: &Projector) -> Result<RieszEstimate> {
    let dnu = nu.require_derivative()?;
    check_len("riesz rows", p_lambda.nrows(), nu.nrows())?;
    let m = column_means(dnu);
    let (gram, _) = projected_gram(&nu.values, p_lambda)?;
    let system = gram + &m * m.transpose();
    let w_beta = -solve_ridged(&system, &m, "identity Riesz system")?;
    let w_star = &nu.values * &w_beta;
    let denom = 1.0 + m.dot(&w_beta);
    if denom.abs() < 1e-300 {
        return Err(Error::Singular {
            context: "identity Riesz normalisation",
            min_eigenvalue: denom,
        });
    }
    let beta = -&w_beta / denom;
    let v_star = &nu.values * &beta;
    Ok(RieszEstimate {
        mode: RieszMode::IdentityWeight,
        beta,
        w_beta: Some(w_beta),
        f: m,
        r: None,
        v_star,
        w_star: Some(w_star),
    })
}

/// `F = mean(grad1 nu + Gamma nu)`, `R = mean(Sigma^{-1} (P nu)(P nu)')`.
pub fn riesz_moments(
    nu: &DesignMatrix,
    p_lambda: &Projector,
    gamma: &GammaEstimate,
    sigma: &CondVarEstimate,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dnu = nu.require_derivative()?;
    let n = nu.nrows();
    check_len("riesz gamma", n, gamma.values.len())?;
    check_len("riesz sigma", n, sigma.len())?;
    if sigma.values.iter().any(|&s| s <= 0.0) {
        return Err(Error::Invalid("optimal Riesz needs a positive Sigma".into()));
    }
    let k = nu.ncols();
    let mut f = DVector::zeros(k);
    for j in 0..k {
        let mut acc = 0.0;
        for i in 0..n {
            acc += dnu[(i, j)] + gamma.values[i] * nu.values[(i, j)];
        }
        f[j] = acc / n as f64;
    }
    let pnu = p_lambda.project_matrix(&nu.values)?;
    let inv = sigma.inverse();
    let mut scaled = pnu.clone();
    for j in 0..k {
        for i in 0..n {
            scaled[(i, j)] *= inv[i];
        }
    }
    let r = pnu.transpose() * scaled / n as f64;
    let r = (&r + r.transpose()) * 0.5;
    Ok((f, r))
}

/// `beta = R^- F`, `v* = nu beta`.
pub fn riesz_optimal(
    nu: &DesignMatrix,
    p_lambda: &Projector,
    gamma: &GammaEstimate,
    sigma: &CondVarEstimate,
) -> Result<RieszEstimate> {
    let (f, r) = riesz_moments(nu, p_lambda, gamma, sigma)?;
    let (rinv, rank) = sym_pinv(&r);
    if rank < r.nrows() {
        log::debug!("optimal Riesz: R truncated to rank {rank} of {}", r.nrows());
    }
    let beta = &rinv * &f;
    let v_star = &nu.values * &beta;
    Ok(RieszEstimate {
        mode: RieszMode::OptimalWeight,
        beta,
        w_beta: None,
        f,
        r: Some(r),
        v_star,
        w_star: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrthoResidualStats {
    pub sigma0_sq: f64,
    pub theta_ref: f64,
}

/// Population-form variance of `grad1 h - theta - Gamma * resid`.
pub fn sigma0_sq(
    grad1_h: &DVector<f64>,
    theta: f64,
    gamma_vals: &DVector<f64>,
    resid: &DVector<f64>,
) -> Result<OrthoResidualStats> {
    let n = grad1_h.len();
    check_len("sigma0 gamma", n, gamma_vals.len())?;
    check_len("sigma0 residuals", n, resid.len())?;
    if n < 2 {
        return Err(Error::TooSmall {
            n,
            reason: "sigma0^2 needs at least two observations".into(),
        });
    }
    let eps: Vec<f64> = (0..n)
        .map(|i| grad1_h[i] - theta - gamma_vals[i] * resid[i])
        .collect();
    let mut v = pop_variance(&eps);
    if v < SIGMA0_FLOOR {
        log::warn!("sigma0^2 = {v:e} below floor; using {SIGMA0_FLOOR:e}");
        v = SIGMA0_FLOOR;
    }
    Ok(OrthoResidualStats {
        sigma0_sq: v,
        theta_ref: theta,
    })
}

/// Optimal-weight representer obtained through `w*`: minimize
/// `beta' R beta + (1 + F' beta)^2 / sigma0^2` over `w = nu beta`, then
/// `v* = -w* sigma0^2 / (1 + F' beta)`. Agrees with [`riesz_optimal`].
pub fn riesz_optimal_via_wstar(
    nu: &DesignMatrix,
    p_lambda: &Projector,
    gamma: &GammaEstimate,
    sigma: &CondVarEstimate,
    sigma0: &OrthoResidualStats,
) -> Result<RieszEstimate> {
    let (f, r) = riesz_moments(nu, p_lambda, gamma, sigma)?;
    let s0 = sigma0.sigma0_sq;
    // Normal equations of the quadratic: (R + F F' / s0) beta = -F / s0.
    let system = &r + &f * f.transpose() / s0;
    let (inv, _) = sym_pinv(&system);
    let w_beta = -(inv * &f) / s0;
    let denom = 1.0 + f.dot(&w_beta);
    if denom.abs() < 1e-300 {
        return Err(Error::Singular {
            context: "optimal Riesz normalisation",
            min_eigenvalue: denom,
        });
    }
    let beta = -&w_beta * (s0 / denom);
    let w_star = &nu.values * &w_beta;
    let v_star = &nu.values * &beta;
    Ok(RieszEstimate {
        mode: RieszMode::OptimalWeight,
        beta,
        w_beta: Some(w_beta),
        f,
        r: Some(r),
        v_star,
        w_star: Some(w_star),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve::{build_spline_basis, BasisSpec};
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn knn_small_example() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 10.0]);
        let r2 = DVector::from_vec(vec![1.0, 4.0, 9.0]);
        let s = estimate_sigma_knn(&x, &r2, 2).unwrap();
        assert_eq!(s.values.as_slice(), &[2.5, 2.5, 6.5]);
        let all = estimate_sigma_knn(&x, &r2, 3).unwrap();
        assert!(all.values.iter().all(|&v| (v - 14.0 / 3.0).abs() < 1e-15));
        assert!(estimate_sigma_knn(&x, &r2, 4).is_err());
    }

    #[test]
    fn knn_constant_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let s = estimate_sigma_knn(&x, &DVector::from_element(30, 2.25), 5).unwrap();
        assert!(s.values.iter().all(|&v| v == 2.25));
    }

    #[test]
    fn projection_sigma_constant_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(40, 1, |_, _| rng.random::<f64>());
        let dm = build_spline_basis(&x, &BasisSpec::spline(3), false).unwrap();
        let p = Projector::from_design(&dm).unwrap();
        let s = estimate_sigma_projection(&p, &DVector::from_element(40, 0.49)).unwrap();
        assert!(s.values.iter().all(|&v| (v - 0.49).abs() < 1e-12));
        let lin = dm.values.column(1).map(|v| 1.0 + v);
        let s = estimate_sigma_projection(&p, &lin.clone_owned()).unwrap();
        assert!((s.values - lin).amax() < 1e-10);
    }

    #[test]
    fn gamma_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(50, 1, |_, _| rng.random::<f64>());
        let dm = build_spline_basis(&x, &BasisSpec::spline(3), false).unwrap();
        let p = Projector::from_design(&dm).unwrap();
        let g = DVector::from_fn(50, |_, _| rng.random::<f64>());
        let zero = estimate_gamma(&p, &g, 0.3, &DVector::zeros(50), &CondVarEstimate::identity(50)).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn riesz_identity_zero_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y2 = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let nu = build_spline_basis(&y2, &BasisSpec::spline(3).on_columns(vec![1]), true).unwrap();
        let p = Projector::from_design(&nu).unwrap();
        let est = riesz_identity(&nu, &p).unwrap();
        assert!(est.beta.iter().all(|&b| b == 0.0));
        assert!(est.w_star.unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn riesz_identity_toy_by_hand() {
        // nu = [1, y], grad nu = [0, 1]; P = identity on R^4.
        let y = [0.5, -1.0, 2.0, 0.25];
        let nu = DesignMatrix {
            values: DMatrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { y[i] }),
            derivative1: Some(DMatrix::from_fn(4, 2, |_, j| j as f64)),
            specs: Vec::new(),
        };
        let p = Projector::new(&DMatrix::identity(4, 4)).unwrap();
        let est = riesz_identity(&nu, &p).unwrap();
        let sy: f64 = y.iter().sum();
        let syy: f64 = y.iter().map(|v| v * v).sum();
        // System [[1, sy/4], [sy/4, syy/4 + 1]] beta = -[0, 1].
        let (a, b, d) = (1.0, sy / 4.0, syy / 4.0 + 1.0);
        let det = a * d - b * b;
        let w = [b / det, -a / det];
        assert_relative_eq!(est.w_beta.as_ref().unwrap()[0], w[0], max_relative = 1e-9);
        assert_relative_eq!(est.w_beta.as_ref().unwrap()[1], w[1], max_relative = 1e-9);
    }

    #[test]
    fn riesz_optimal_orthonormal_gives_f() {
        let q = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]) * 2.0;
        let nu = DesignMatrix {
            values: q.clone(),
            derivative1: Some(DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.1)),
            specs: Vec::new(),
        };
        let p = Projector::new(&q).unwrap();
        let est = riesz_optimal(&nu, &p, &GammaEstimate::zeros(4), &CondVarEstimate::identity(4)).unwrap();
        assert!((&est.beta - &est.f).amax() < 1e-12);
        let r = est.r.unwrap();
        assert!((&r - r.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn sigma0_two_points_and_floor() {
        let g = DVector::from_vec(vec![1.0, 4.0]);
        let s = sigma0_sq(&g, 0.0, &DVector::zeros(2), &DVector::zeros(2)).unwrap();
        assert_eq!(s.sigma0_sq, 2.25);
        let c = sigma0_sq(&DVector::from_element(3, 2.0), 1.0, &DVector::zeros(3), &DVector::zeros(3)).unwrap();
        assert_eq!(c.sigma0_sq, SIGMA0_FLOOR);
        assert!(sigma0_sq(&DVector::zeros(1), 0.0, &DVector::zeros(1), &DVector::zeros(1)).is_err());
    }

    fn random_riesz_inputs(seed: u64, n: usize) -> (DesignMatrix, Projector, GammaEstimate, CondVarEstimate) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let y2 = DMatrix::from_fn(n, 2, |i, j| x[(i, j)] + 0.3 * rng.random::<f64>());
        let nu = build_spline_basis(&y2, &BasisSpec::spline(3), true).unwrap();
        let lam = build_spline_basis(&x, &BasisSpec::spline(4), false).unwrap();
        let p = Projector::from_design(&lam).unwrap();
        let gamma = GammaEstimate {
            values: DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5)),
        };
        let sigma = CondVarEstimate::oracle(DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0))).unwrap();
        (nu, p, gamma, sigma)
    }

    #[test]
    fn wstar_route_matches_direct_representer() {
        let (nu, p, gamma, sigma) = random_riesz_inputs(5, 200);
        let direct = riesz_optimal(&nu, &p, &gamma, &sigma).unwrap();
        let s0 = OrthoResidualStats {
            sigma0_sq: 0.7,
            theta_ref: 1.0,
        };
        let via = riesz_optimal_via_wstar(&nu, &p, &gamma, &sigma, &s0).unwrap();
        let scale = direct.v_star.amax().max(1.0);
        assert!((&direct.v_star - &via.v_star).amax() < 1e-8 * scale);
    }

    #[test]
    fn optimal_and_identity_agree_up_to_sigma_scale() {
        let (nu, p, _, _) = random_riesz_inputs(6, 150);
        let n = nu.nrows();
        let c = 2.5;
        let opt = riesz_optimal(
            &nu,
            &p,
            &GammaEstimate::zeros(n),
            &CondVarEstimate::oracle(DVector::from_element(n, c)).unwrap(),
        )
        .unwrap();
        let id = riesz_identity(&nu, &p).unwrap();
        let scale = id.v_star.amax().max(1.0);
        // The identity route carries the ridge floor, the optimal route a
        // pseudo-inverse; they agree to the conditioning of the Gram matrix.
        let d = (&opt.v_star - &id.v_star * c).amax();
        assert!(d < 1e-5 * c * scale, "diff {d} scale {scale}");
    }
}
