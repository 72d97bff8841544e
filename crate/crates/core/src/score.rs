//! Influence-function (score) estimators and two-fold cross-fitting.
//!
//! Every score estimator averages `a(y2) grad1 h(y2) - kappa(x) (y1 - h(y2))`.
//! The identity score uses `kappa = -P_lambda v*` and the efficient score
//! `kappa = Gamma - P_lambda v* / Sigma`, with `v*` the representer from
//! [`crate::nuisance`].

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::nuisance::{CondVarEstimate, GammaEstimate, RieszEstimate, RieszMode};
use crate::sieve::{Projector, Sieve};
use crate::smd::{FittedH, ThetaEstimate, ThetaKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    IdentityScore,
    EfficientScore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreFunction {
    pub kappa: DVector<f64>,
    pub kind: ScoreKind,
}

/// `kappa_ID = -P_lambda v*`.
pub fn kappa_identity(v_star: &RieszEstimate, p_lambda: &Projector) -> Result<ScoreFunction> {
    if v_star.mode != RieszMode::IdentityWeight {
        return Err(Error::Invalid("identity score needs an identity-weight representer".into()));
    }
    Ok(ScoreFunction {
        kappa: -p_lambda.project(&v_star.v_star)?,
        kind: ScoreKind::IdentityScore,
    })
}

/// `kappa_EIF = Gamma - P_lambda v* / Sigma_score`.
pub fn kappa_efficient(
    gamma: &GammaEstimate,
    v_star: &RieszEstimate,
    p_lambda: &Projector,
    sigma_score: &CondVarEstimate,
) -> Result<ScoreFunction> {
    let n = gamma.values.len();
    check_len("efficient score sigma", n, sigma_score.len())?;
    if sigma_score.values.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(Error::Invalid("score Sigma must be positive".into()));
    }
    let pv = p_lambda.project(&v_star.v_star)?;
    Ok(ScoreFunction {
        kappa: &gamma.values - pv.component_div(&sigma_score.values),
        kind: ScoreKind::EfficientScore,
    })
}

/// Per-observation `a grad1 h - kappa (y1 - h)`.
pub fn score_terms(
    h: &DVector<f64>,
    grad1_h: &DVector<f64>,
    kappa: &DVector<f64>,
    y1: &DVector<f64>,
    a: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let n = y1.len();
    check_len("score fitted values", n, h.len())?;
    check_len("score derivative", n, grad1_h.len())?;
    check_len("score kappa", n, kappa.len())?;
    let mut g = grad1_h.clone();
    if let Some(a) = a {
        check_len("weight function values", n, a.len())?;
        g.component_mul_assign(a);
    }
    Ok(g - kappa.component_mul(&(y1 - h)))
}

fn kind_of(score: ScoreKind) -> ThetaKind {
    match score {
        ScoreKind::IdentityScore => ThetaKind::IdentityScore,
        ScoreKind::EfficientScore => ThetaKind::EfficientScore,
    }
}

pub fn theta_score(
    fitted_h: &FittedH,
    score: &ScoreFunction,
    data: &Dataset,
    a: Option<&DVector<f64>>,
) -> Result<ThetaEstimate> {
    let (h, g) = fitted_h.eval_with_grad(&data.y2)?;
    let per_obs = score_terms(&h, &g, &score.kappa, &data.y1, a)?;
    Ok(ThetaEstimate {
        theta: per_obs.mean(),
        kind: kind_of(score.kind),
        per_obs,
    })
}

/// Two-fold split: `fold[i] in {0, 1}`, sizes differing by at most one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossfitPlan {
    pub fold: Vec<u8>,
    pub seed: u64,
}

impl CrossfitPlan {
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n < 4 {
            return Err(Error::TooSmall {
                n,
                reason: "cross-fitting needs at least four observations".into(),
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fold = alloc::vec![0u8; n];
        for (pos, &i) in order.iter().enumerate() {
            fold[i] = (pos % 2) as u8;
        }
        Ok(Self { fold, seed })
    }

    pub fn indices(&self, k: u8) -> Vec<usize> {
        (0..self.fold.len()).filter(|&i| self.fold[i] == k).collect()
    }

    /// The same plan with fold labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            fold: self.fold.iter().map(|&f| 1 - f).collect(),
            seed: self.seed,
        }
    }
}

/// Nuisances fitted on one training fold: `h` and the instrument sieve with
/// coefficients `xi` such that `lambda(x)' xi` reproduces `kappa`.
#[derive(Clone, Debug)]
pub struct FoldNuisances {
    pub h: FittedH,
    pub lambda: Sieve,
    pub xi: DVector<f64>,
}

/// Cross-fitted score estimate. `fit_fold(train_idx, train)` fits the
/// nuisances on a training subsample; the score is evaluated on the
/// complementary fold and the two fold means are combined with weights
/// proportional to fold size.
pub fn theta_score_crossfit<F>(
    plan: &CrossfitPlan,
    data: &Dataset,
    kind: ScoreKind,
    a: Option<&DVector<f64>>,
    mut fit_fold: F,
) -> Result<ThetaEstimate>
where
    F: FnMut(&[usize], &Dataset) -> Result<FoldNuisances>,
{
    let n = data.len();
    check_len("crossfit plan", n, plan.fold.len())?;
    let mut per_obs = DVector::zeros(n);
    for k in 0..2u8 {
        let test_idx = plan.indices(k);
        let train_idx = plan.indices(1 - k);
        let train = data.subset(&train_idx);
        let test = data.subset(&test_idx);
        let nuis = fit_fold(&train_idx, &train)?;
        let (h, g) = nuis.h.eval_with_grad(&test.y2)?;
        let lam = nuis.lambda.design(&test.x, false)?;
        let kappa = &lam.values * &nuis.xi;
        let a_test = a.map(|a| crate::data::select_vec(a, &test_idx));
        let s = score_terms(&h, &g, &kappa, &test.y1, a_test.as_ref())?;
        for (pos, &i) in test_idx.iter().enumerate() {
            per_obs[i] = s[pos];
        }
    }
    Ok(ThetaEstimate {
        theta: per_obs.mean(),
        kind: kind_of(kind),
        per_obs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::riesz_identity;
    use crate::sieve::{build_spline_basis, BasisSpec};
    use crate::smd::{fit_ismd, theta_simple_plugin, HSieve, SmdProblem, Structure};
    use alloc::vec;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn sample(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.0..1.0));
        let y2 = DMatrix::from_fn(n, 1, |i, _| x[(i, 0)] + 0.1 * rng.random_range(-1.0..1.0));
        let y1 = DVector::from_fn(n, |i, _| y2[(i, 0)] * y2[(i, 0)] + 0.2 * rng.random_range(-1.0..1.0));
        Dataset::new(y1, y2, x).unwrap()
    }

    #[test]
    fn zero_kappa_reduces_to_simple_plugin() {
        let data = sample(120);
        let phi = build_spline_basis(&data.x, &BasisSpec::spline(4), false).unwrap();
        let p = Projector::from_design(&phi).unwrap();
        let sieve = HSieve::Spline(vec![BasisSpec::spline(3)]);
        let h = fit_ismd(&SmdProblem::new(&data, &p, &sieve, &Structure::Np)).unwrap();
        let zero = ScoreFunction {
            kappa: DVector::zeros(120),
            kind: ScoreKind::IdentityScore,
        };
        let a = theta_score(&h, &zero, &data, None).unwrap();
        let b = theta_simple_plugin(&h, &data, None).unwrap();
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn identity_kappa_is_minus_projected_representer() {
        let data = sample(80);
        let nu = build_spline_basis(&data.y2, &BasisSpec::spline(3), true).unwrap();
        let lam = build_spline_basis(&data.x, &BasisSpec::spline(3), false).unwrap();
        let p = Projector::from_design(&lam).unwrap();
        let v = riesz_identity(&nu, &p).unwrap();
        let k = kappa_identity(&v, &p).unwrap();
        let oracle = -(p.matrix() * &v.v_star);
        assert!((k.kappa - oracle).amax() < 1e-12);
    }

    #[test]
    fn plan_is_balanced_and_seeded() {
        let a = CrossfitPlan::new(11, 3).unwrap();
        let n0 = a.indices(0).len();
        assert!(n0 == 5 || n0 == 6);
        assert_eq!(a, CrossfitPlan::new(11, 3).unwrap());
        assert!(CrossfitPlan::new(3, 0).is_err());
    }

    fn fold_fit(train: &Dataset) -> Result<FoldNuisances> {
        let lam_specs = vec![BasisSpec::spline(4)];
        let lam = Sieve::fit(&train.x, &lam_specs)?;
        let p = Projector::new(&lam.design(&train.x, false)?.values)?;
        let sieve = HSieve::Spline(vec![BasisSpec::spline(3)]);
        let h = fit_ismd(&SmdProblem::new(train, &p, &sieve, &Structure::Np))?;
        let nu = Sieve::fit(&train.y2, &[BasisSpec::spline(3)])?.design(&train.y2, true)?;
        let k = kappa_identity(&riesz_identity(&nu, &p)?, &p)?;
        let xi = p.coefficients(&k.kappa)?;
        Ok(FoldNuisances { h, lambda: lam, xi })
    }

    #[test]
    fn crossfit_with_shared_nuisances_matches_full_sample() {
        let data = sample(100);
        let full = fold_fit(&data).unwrap();
        let plan = CrossfitPlan::new(100, 1).unwrap();
        let x = theta_score_crossfit(&plan, &data, ScoreKind::IdentityScore, None, |_, _| Ok(full.clone())).unwrap();
        let lam = full.lambda.design(&data.x, false).unwrap().values;
        let score = ScoreFunction {
            kappa: &lam * &full.xi,
            kind: ScoreKind::IdentityScore,
        };
        let direct = theta_score(&full.h, &score, &data, None).unwrap();
        assert!((x.theta - direct.theta).abs() < 1e-12);
    }

    #[test]
    fn crossfit_fold_swap_symmetry() {
        let data = sample(120);
        let plan = CrossfitPlan::new(120, 2).unwrap();
        let a = theta_score_crossfit(&plan, &data, ScoreKind::IdentityScore, None, |_, t| fold_fit(t)).unwrap();
        let b = theta_score_crossfit(&plan.swapped(), &data, ScoreKind::IdentityScore, None, |_, t| fold_fit(t)).unwrap();
        assert_eq!(a.per_obs, b.per_obs);
        assert!((a.theta - b.theta).abs() < 1e-12);
    }
}
