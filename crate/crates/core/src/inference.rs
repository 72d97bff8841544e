//! Analytic variances and multiplier-bootstrap bookkeeping.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::{mean, pop_variance, Dataset};
use crate::error::{check_len, Error, Result};
use crate::linalg::sym_pinv;
use crate::nuisance::{
    riesz_moments, CondVarEstimate, GammaEstimate, OrthoResidualStats, RieszEstimate, RieszMode,
};
use crate::sieve::{DesignMatrix, Projector};
use crate::smd::FittedH;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceMethod {
    ScoreSampleVar,
    /// The identity-weight SMD display evaluated literally.
    IsmdFormula,
    /// Sandwich form of the identity-weight SMD influence function.
    IsmdSandwich,
    OsmdBound,
    Bootstrap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub se: f64,
    pub n: usize,
    pub method: VarianceMethod,
}

impl VarianceEstimate {
    pub fn new(variance: f64, n: usize, method: VarianceMethod) -> Self {
        Self {
            variance,
            se: libm::sqrt(variance / n as f64),
            n,
            method,
        }
    }
}

/// Population-form variance of per-observation scores.
pub fn se_from_scores(scores: &DVector<f64>) -> Result<VarianceEstimate> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::TooSmall {
            n,
            reason: "score variance needs at least two observations".into(),
        });
    }
    Ok(VarianceEstimate::new(
        pop_variance(scores.as_slice()),
        n,
        VarianceMethod::ScoreSampleVar,
    ))
}

/// Components `D = [-1 - mean(grad1 w*), P_lambda w*]` of the identity-weight
/// SMD influence function.
fn ismd_d(w_star: &RieszEstimate, p_lambda: &Projector) -> Result<(f64, DVector<f64>)> {
    if w_star.mode != RieszMode::IdentityWeight {
        return Err(Error::Invalid("ISMD variance needs an identity-weight representer".into()));
    }
    let w_beta = w_star.w_beta.as_ref().expect("identity mode stores w_beta");
    let w_vals = w_star.w_star.as_ref().expect("identity mode stores w_star");
    let d1 = -1.0 - w_star.f.dot(w_beta);
    let d2 = p_lambda.project(w_vals)?;
    Ok((d1, d2))
}

/// `V = mean(|D|^2)^2 / mean(|D|^2 r^2)` with `r = y1 - h(y2)`, as displayed
/// for the identity-weight SMD estimator.
pub fn variance_ismd(
    w_star: &RieszEstimate,
    p_lambda: &Projector,
    data: &Dataset,
    fitted_h: &FittedH,
) -> Result<VarianceEstimate> {
    let (d1, d2) = ismd_d(w_star, p_lambda)?;
    let r = &data.y1 - fitted_h.eval(&data.y2)?;
    check_len("ISMD variance residuals", d2.len(), r.len())?;
    let n = r.len();
    let norm2: Vec<f64> = d2.iter().map(|v| d1 * d1 + v * v).collect();
    let num = mean(&norm2);
    let den = norm2.iter().zip(r.iter()).map(|(d, e)| d * e * e).sum::<f64>() / n as f64;
    if den <= 0.0 {
        return Err(Error::Invalid("ISMD variance denominator is not positive".into()));
    }
    Ok(VarianceEstimate::new(num * num / den, n, VarianceMethod::IsmdFormula))
}

/// `V = mean((D1 (grad1 h - theta) + D2 r)^2) / mean(|D|^2)^2`, the variance
/// of the simple plug-in's influence function.
pub fn variance_ismd_sandwich(
    w_star: &RieszEstimate,
    p_lambda: &Projector,
    data: &Dataset,
    fitted_h: &FittedH,
) -> Result<VarianceEstimate> {
    let (d1, d2) = ismd_d(w_star, p_lambda)?;
    let (h, g) = fitted_h.eval_with_grad(&data.y2)?;
    let r = &data.y1 - h;
    let n = r.len();
    check_len("ISMD variance residuals", d2.len(), n)?;
    let theta = g.mean();
    let num = (0..n)
        .map(|i| {
            let t = d1 * (g[i] - theta) + d2[i] * r[i];
            t * t
        })
        .sum::<f64>()
        / n as f64;
    let den = mean(&d2.iter().map(|v| d1 * d1 + v * v).collect::<Vec<_>>());
    if den <= 0.0 {
        return Err(Error::Invalid("ISMD variance denominator is not positive".into()));
    }
    Ok(VarianceEstimate::new(num / (den * den), n, VarianceMethod::IsmdSandwich))
}

/// `beta' R beta + (1 + F' beta)^2 / sigma0^2`, the sieve version of the
/// inverse efficiency bound's variational problem.
pub fn osmd_bound_objective(beta: &DVector<f64>, f: &DVector<f64>, r: &DMatrix<f64>, sigma0_sq: f64) -> f64 {
    let c = 1.0 + f.dot(beta);
    beta.dot(&(r * beta)) + c * c / sigma0_sq
}

/// Closed-form minimizer `-R^- F / (sigma0^2 + F' R^- F)` and the minimum
/// `1 / (sigma0^2 + F' R^- F)`.
pub fn osmd_bound_minimizer(f: &DVector<f64>, r: &DMatrix<f64>, sigma0_sq: f64) -> (DVector<f64>, f64) {
    let (rinv, _) = sym_pinv(r);
    let rf = &rinv * f;
    let g = f.dot(&rf);
    let s = sigma0_sq + g;
    (-rf / s, 1.0 / s)
}

/// Efficiency-bound variance `V = sigma0^2 + F' R^- F`.
pub fn variance_osmd_bound(
    nu: &DesignMatrix,
    p_lambda: &Projector,
    gamma: &GammaEstimate,
    sigma: &CondVarEstimate,
    sigma0: &OrthoResidualStats,
) -> Result<VarianceEstimate> {
    let (f, r) = riesz_moments(nu, p_lambda, gamma, sigma)?;
    let (_, min) = osmd_bound_minimizer(&f, &r, sigma0.sigma0_sq);
    if !(min > 0.0) || !min.is_finite() {
        return Err(Error::Invalid("efficiency bound minimum is not positive".into()));
    }
    Ok(VarianceEstimate::new(1.0 / min, nu.nrows(), VarianceMethod::OsmdBound))
}

/// Law of the bootstrap multipliers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierLaw {
    /// Standard exponential (unit mean and variance).
    Exponential,
    /// All weights one; every draw reproduces the point estimate.
    Unit,
}

/// Multipliers for draw `b`, from the substream `b` of `seed`.
pub fn bootstrap_multipliers(law: MultiplierLaw, seed: u64, b: u64, n: usize) -> DVector<f64> {
    match law {
        MultiplierLaw::Unit => DVector::from_element(n, 1.0),
        MultiplierLaw::Exponential => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            DVector::from_fn(n, |_, _| Exp1.sample(&mut rng))
        }
    }
}

/// Type-7 sample quantile.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    if lo + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[lo] + (h - lo as f64) * (v[lo + 1] - v[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub draws: Vec<f64>,
    pub ci: (f64, f64),
    pub level: f64,
    pub law: MultiplierLaw,
    pub failures: usize,
    pub se: f64,
}

/// Percentile interval `[q((1 - level) / 2), q((1 + level) / 2)]`.
pub fn percentile_ci(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.is_empty() || !(0.0..1.0).contains(&level) {
        return Err(Error::Invalid("percentile CI needs draws and a level in (0, 1)".into()));
    }
    let a = (1.0 - level) / 2.0;
    Ok((quantile(draws, a), quantile(draws, 1.0 - a)))
}

/// Collects per-draw outcomes; failed draws are skipped and counted, and more
/// than 10% failures is an error.
pub fn summarize_bootstrap(outcomes: Vec<Result<f64>>, level: f64, law: MultiplierLaw) -> Result<BootstrapResult> {
    let total = outcomes.len();
    let mut draws = Vec::with_capacity(total);
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(v) if v.is_finite() => draws.push(v),
            Ok(_) => failures += 1,
            Err(e) => {
                log::debug!("bootstrap draw failed: {e}");
                failures += 1;
            }
        }
    }
    if failures * 10 > total || draws.is_empty() {
        return Err(Error::BootstrapFailures { failed: failures, total });
    }
    let ci = percentile_ci(&draws, level)?;
    let se = libm::sqrt(pop_variance(&draws));
    Ok(BootstrapResult {
        draws,
        ci,
        level,
        law,
        failures,
        se,
    })
}

/// Serial bootstrap: `draw(b, omega)` refits the estimator under multipliers
/// `omega` and returns the draw.
pub fn run_bootstrap<F>(
    n: usize,
    b: usize,
    seed: u64,
    level: f64,
    law: MultiplierLaw,
    mut draw: F,
) -> Result<BootstrapResult>
where
    F: FnMut(u64, &DVector<f64>) -> Result<f64>,
{
    if b < 1 {
        return Err(Error::Invalid("bootstrap needs at least one draw".into()));
    }
    let outcomes = (0..b as u64)
        .map(|k| draw(k, &bootstrap_multipliers(law, seed, k, n)))
        .collect();
    summarize_bootstrap(outcomes, level, law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn score_variance_trivial() {
        let c = se_from_scores(&DVector::from_element(5, 2.0)).unwrap();
        assert_eq!(c.se, 0.0);
        let v = se_from_scores(&DVector::from_vec(vec![-1.0, 1.0])).unwrap();
        assert_eq!(v.variance, 1.0);
        assert!((v.se - libm::sqrt(0.5)).abs() < 1e-15);
        assert!(se_from_scores(&DVector::zeros(1)).is_err());
    }

    #[test]
    fn bound_minimizer_zero_f() {
        let r = DMatrix::identity(3, 3);
        let (b, m) = osmd_bound_minimizer(&DVector::zeros(3), &r, 0.7);
        assert!(b.iter().all(|&v| v == 0.0));
        assert!((1.0 / m - 0.7).abs() < 1e-15);
    }

    #[test]
    fn quantiles_and_ci() {
        let d: Vec<f64> = (0..=100).map(|v| v as f64).collect();
        assert_eq!(quantile(&d, 0.025), 2.5);
        let (lo, hi) = percentile_ci(&d, 0.95).unwrap();
        let (lo9, hi9) = percentile_ci(&d, 0.90).unwrap();
        assert!(lo <= lo9 && hi9 <= hi);
        assert!((lo - 2.5).abs() < 1e-12 && (hi - 97.5).abs() < 1e-12);
    }

    #[test]
    fn failures_over_ten_percent_error() {
        let mut v: Vec<Result<f64>> = (0..18).map(|k| Ok(k as f64)).collect();
        v.push(Err(Error::Invalid("x".into())));
        v.push(Err(Error::Invalid("y".into())));
        assert_eq!(summarize_bootstrap(v, 0.95, MultiplierLaw::Exponential).unwrap().failures, 2);
        let mut w: Vec<Result<f64>> = (0..17).map(|k| Ok(k as f64)).collect();
        for _ in 0..3 {
            w.push(Ok(f64::NAN));
        }
        assert_eq!(
            summarize_bootstrap(w, 0.95, MultiplierLaw::Exponential),
            Err(Error::BootstrapFailures { failed: 3, total: 20 })
        );
    }

    #[test]
    fn multipliers_are_substreamed() {
        let a = bootstrap_multipliers(MultiplierLaw::Exponential, 5, 3, 10);
        let b = bootstrap_multipliers(MultiplierLaw::Exponential, 5, 3, 10);
        let c = bootstrap_multipliers(MultiplierLaw::Exponential, 5, 4, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|&v| v > 0.0));
    }
}
