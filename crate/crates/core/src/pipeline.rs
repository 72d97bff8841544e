//! End-to-end estimators: P-ISMD, OP-OSMD, IS, ES, their cross-fitted
//! variants and the partially linear/additive fits, with analytic standard
//! errors and the SMD multiplier bootstrap.
//!
//! Nuisance recipe per estimator:
//!
//! | estimator | `h`  | extra nuisances                                   | SE                |
//! |-----------|------|---------------------------------------------------|-------------------|
//! | p-ismd    | ISMD | identity `w*` on `(nu, lambda)`                   | ISMD sandwich     |
//! | op-osmd   | OSMD | `Sigma` (SMD), `Gamma`, `(F, R)`, `sigma0^2`      | efficiency bound  |
//! | is        | ISMD | identity `v*`                                     | score variance    |
//! | es        | OSMD | as op-osmd, plus optimal `v*` and `Sigma` (score) | score variance    |
//! | is-x/es-x | as is/es on each training fold, `kappa` refit on `lambda` | score variance |

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{
    bootstrap_multipliers, se_from_scores, summarize_bootstrap, variance_ismd, variance_ismd_sandwich,
    variance_osmd_bound, BootstrapResult, MultiplierLaw, VarianceMethod,
};
use crate::nuisance::{
    estimate_gamma, estimate_sigma_knn, estimate_sigma_projection, riesz_identity, riesz_optimal,
    riesz_optimal_via_wstar, sigma0_sq, CondVarEstimate, CondVarMethod, GammaEstimate, OrthoResidualStats,
    RieszEstimate,
};
use crate::score::{
    kappa_efficient, kappa_identity, theta_score, theta_score_crossfit, CrossfitPlan, FoldNuisances,
    ScoreFunction, ScoreKind,
};
use crate::sieve::{BasisSpec, DesignMatrix, Projector, Sieve};
use crate::smd::{
    fit_ismd, fit_ismd_from, fit_osmd, fit_structured, theta_orthogonal_plugin_weighted,
    theta_simple_plugin_weighted, AnnConfig, FittedH, HSieve, SmdProblem, Structure, ThetaEstimate,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "p-ismd")]
    PIsmd,
    #[serde(rename = "op-osmd")]
    OpOsmd,
    #[serde(rename = "is")]
    Is,
    #[serde(rename = "es")]
    Es,
    #[serde(rename = "is-x")]
    IsX,
    #[serde(rename = "es-x")]
    EsX,
    /// Partially linear `theta y2[0] + h1(y2[1..])`.
    #[serde(rename = "pl")]
    Pl,
    /// Partially additive `theta y2[0] + h1(y2[1]) + h2(y2[2]) + h3(y2[3..])`.
    #[serde(rename = "pa")]
    Pa,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::PIsmd,
        EstimatorKind::OpOsmd,
        EstimatorKind::Is,
        EstimatorKind::Es,
        EstimatorKind::IsX,
        EstimatorKind::EsX,
        EstimatorKind::Pl,
        EstimatorKind::Pa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::PIsmd => "p-ismd",
            EstimatorKind::OpOsmd => "op-osmd",
            EstimatorKind::Is => "is",
            EstimatorKind::Es => "es",
            EstimatorKind::IsX => "is-x",
            EstimatorKind::EsX => "es-x",
            EstimatorKind::Pl => "pl",
            EstimatorKind::Pa => "pa",
        }
    }

    /// Estimators whose point estimate comes from an SMD fit and can be
    /// bootstrapped by reweighting the SMD residuals.
    pub fn bootstrappable(&self) -> bool {
        matches!(self, EstimatorKind::PIsmd | EstimatorKind::OpOsmd)
    }

    fn needs_osmd(&self) -> bool {
        matches!(self, EstimatorKind::OpOsmd | EstimatorKind::Es)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(alloc::format!("unknown estimator '{s}'")))
    }
}

/// Conditional-variance source, written `knn:<k>`, `auto`, `true`,
/// `identity`, `projection` or `wstar`.
///
/// `auto` is kNN with `k = 50` below `n = 5000` and `k = 100` from there on.
/// `wstar` (score only) uses the `auto` variance and builds `v*` through the
/// optimally weighted `w*` problem instead of solving for `v*` directly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SigmaChoice {
    Knn(usize),
    Auto,
    /// The simulation oracle.
    Oracle,
    Identity,
    Projection,
    WStar,
}

impl SigmaChoice {
    pub fn auto_k(n: usize) -> usize {
        if n < 5000 {
            50
        } else {
            100
        }
    }
}

impl fmt::Display for SigmaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaChoice::Knn(k) => write!(f, "knn:{k}"),
            SigmaChoice::Auto => f.write_str("auto"),
            SigmaChoice::Oracle => f.write_str("true"),
            SigmaChoice::Identity => f.write_str("identity"),
            SigmaChoice::Projection => f.write_str("projection"),
            SigmaChoice::WStar => f.write_str("wstar"),
        }
    }
}

impl FromStr for SigmaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SigmaChoice::Auto),
            "true" | "oracle" => Ok(SigmaChoice::Oracle),
            "identity" => Ok(SigmaChoice::Identity),
            "projection" => Ok(SigmaChoice::Projection),
            "wstar" => Ok(SigmaChoice::WStar),
            _ => match s.strip_prefix("knn:").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => Ok(SigmaChoice::Knn(k)),
                _ => Err(Error::Invalid(alloc::format!("unknown Sigma option '{s}'"))),
            },
        }
    }
}

impl TryFrom<String> for SigmaChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SigmaChoice> for String {
    fn from(s: SigmaChoice) -> String {
        s.to_string()
    }
}

/// Default relative floor on estimated `Sigma`.
pub const DEFAULT_SIGMA_REL_FLOOR: f64 = 0.05;

/// Everything an estimation run needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Sieve for `h(y2)`.
    pub sieve: HSieve,
    /// Instrument basis `phi(x)` of the SMD criterion.
    pub phi: Vec<BasisSpec>,
    /// Instrument basis `lambda(x)` for Riesz representers and scores.
    pub lambda: Vec<BasisSpec>,
    /// Basis `nu(y2)` for Riesz representers.
    pub nu: Vec<BasisSpec>,
    /// `Sigma` in the optimal SMD weight.
    pub sigma_smd: SigmaChoice,
    /// `Sigma` in the efficient score.
    pub sigma_score: SigmaChoice,
    /// Estimated `Sigma` values are floored at this fraction of the mean
    /// squared residual (on top of the absolute floor).
    pub sigma_rel_floor: f64,
    /// Partially additive fits use splines for the scalar components.
    pub pa_spline_scalars: bool,
    /// Seeds network initialization and the cross-fitting split.
    pub seed: u64,
}

impl PipelineConfig {
    /// Spline sieves: `nu = Spline(3, 2)` and `phi = lambda = Spline(4, 2)`,
    /// each with pairwise interactions; `Sigma` (SMD) by projection.
    pub fn spline() -> Self {
        let nu = alloc::vec![BasisSpec::spline(3).with_interactions(true)];
        let lam = alloc::vec![BasisSpec::spline(4).with_interactions(true)];
        Self {
            sieve: HSieve::Spline(nu.clone()),
            phi: lam.clone(),
            lambda: lam,
            nu,
            sigma_smd: SigmaChoice::Projection,
            sigma_score: SigmaChoice::Auto,
            sigma_rel_floor: DEFAULT_SIGMA_REL_FLOOR,
            pa_spline_scalars: true,
            seed: 0,
        }
    }

    /// Network sieve for `h` with `phi = [phi1(x[0..3]), phi2(x)]`, which
    /// needs the simulation instrument layout `x = [X1, X2, X3, X~]`;
    /// `Sigma` (SMD) by 5-NN. Riesz bases are the spline defaults.
    pub fn ann(cfg: AnnConfig) -> Self {
        Self {
            sieve: HSieve::Ann(cfg),
            phi: alloc::vec![BasisSpec::phi1().on_columns(alloc::vec![0, 1, 2]), BasisSpec::phi2()],
            sigma_smd: SigmaChoice::Knn(5),
            pa_spline_scalars: false,
            ..Self::spline()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sigma_rel_floor) {
            return Err(Error::Invalid("sigma_rel_floor must lie in [0, 1)".into()));
        }
        if matches!(self.sigma_smd, SigmaChoice::Auto | SigmaChoice::WStar) {
            return Err(Error::Invalid("SMD Sigma must be knn:<k>, projection, true or identity".into()));
        }
        if self.phi.is_empty() || self.lambda.is_empty() || self.nu.is_empty() {
            return Err(Error::Invalid("phi, lambda and nu need at least one basis".into()));
        }
        if let HSieve::Ann(a) = &self.sieve {
            a.rule.validate()?;
            if !(a.lr > 0.0) {
                return Err(Error::Invalid("learning rate must be positive".into()));
            }
        }
        Ok(())
    }

    fn is_ann(&self) -> bool {
        matches!(self.sieve, HSieve::Ann(_))
    }
}

/// A dataset plus the optional simulation oracle for `Sigma(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub data: Dataset,
    pub oracle_sigma: Option<DVector<f64>>,
}

impl Sample {
    pub fn new(data: Dataset) -> Self {
        Self {
            data,
            oracle_sigma: None,
        }
    }

    pub fn with_oracle(data: Dataset, sigma: DVector<f64>) -> Result<Self> {
        crate::error::check_len("oracle Sigma", data.len(), sigma.len())?;
        Ok(Self {
            data,
            oracle_sigma: Some(sigma),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            data: self.data.subset(idx),
            oracle_sigma: self.oracle_sigma.as_ref().map(|s| crate::data::select_vec(s, idx)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Final SMD criterion of the fit behind the estimate.
    pub criterion: Option<f64>,
    /// Optimizer steps (0 for closed-form fits).
    pub steps: usize,
    pub sigma_smd: Option<CondVarMethod>,
    pub sigma_score: Option<CondVarMethod>,
    pub sigma0_sq: Option<f64>,
    /// Mean of `kappa(x)` for score estimators.
    pub kappa_mean: Option<f64>,
    /// Optimizer loss trace.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimator: EstimatorKind,
    pub theta: f64,
    pub se: Option<f64>,
    pub se_method: Option<VarianceMethod>,
    /// P-ISMD only: SE from the identity-weight display evaluated as
    /// printed, reported next to the sandwich SE in `se`.
    pub se_ismd_formula: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub ci_level: Option<f64>,
    pub bootstrap_failures: Option<usize>,
    pub bootstrap_draws: Option<usize>,
    pub diagnostics: Diagnostics,
}

impl EstimatorResult {
    fn new(estimator: EstimatorKind, theta: f64) -> Self {
        Self {
            estimator,
            theta,
            se: None,
            se_method: None,
            se_ismd_formula: None,
            ci: None,
            ci_level: None,
            bootstrap_failures: None,
            bootstrap_draws: None,
            diagnostics: Diagnostics::default(),
        }
    }

    fn with_fit(mut self, h: &FittedH) -> Self {
        self.diagnostics.criterion = Some(h.criterion);
        self.diagnostics.steps = h.steps;
        self.diagnostics.trace = h.trace.clone();
        self
    }

    pub fn attach_bootstrap(&mut self, b: &BootstrapResult) {
        self.ci = Some(b.ci);
        self.ci_level = Some(b.level);
        self.bootstrap_failures = Some(b.failures);
        self.bootstrap_draws = Some(b.draws.len());
    }
}

/// Instrument projections and the Riesz basis on one sample.
struct Bases {
    p_phi: Projector,
    lambda: Sieve,
    /// `None` when `lambda` and `phi` coincide.
    p_lambda: Option<Projector>,
    nu: DesignMatrix,
}

impl Bases {
    fn build(data: &Dataset, cfg: &PipelineConfig) -> Result<Self> {
        let phi = Sieve::fit(&data.x, &cfg.phi)?;
        let p_phi = Projector::new(&phi.design(&data.x, false)?.values)?;
        let lambda = Sieve::fit(&data.x, &cfg.lambda)?;
        let p_lambda = if cfg.lambda == cfg.phi {
            None
        } else {
            Some(Projector::new(&lambda.design(&data.x, false)?.values)?)
        };
        let nu = Sieve::fit(&data.y2, &cfg.nu)?.design(&data.y2, true)?;
        Ok(Self {
            p_phi,
            lambda,
            p_lambda,
            nu,
        })
    }

    fn p_lambda(&self) -> &Projector {
        self.p_lambda.as_ref().unwrap_or(&self.p_phi)
    }
}

fn resolve_sigma(
    choice: SigmaChoice,
    sample: &Sample,
    p: &Projector,
    resid: &DVector<f64>,
    n_ref: usize,
    rel_floor: f64,
) -> Result<CondVarEstimate> {
    let sq = resid.map(|r| r * r);
    let floor = rel_floor * sq.mean();
    let mut est = match choice {
        SigmaChoice::Knn(k) => estimate_sigma_knn(&sample.data.x, &sq, k.min(sample.len())),
        SigmaChoice::Auto | SigmaChoice::WStar => {
            estimate_sigma_knn(&sample.data.x, &sq, SigmaChoice::auto_k(n_ref).min(sample.len()))
        }
        SigmaChoice::Projection => estimate_sigma_projection(p, &sq),
        SigmaChoice::Identity => Ok(CondVarEstimate::identity(sample.len())),
        SigmaChoice::Oracle => match &sample.oracle_sigma {
            Some(s) => CondVarEstimate::oracle(s.clone()),
            None => Err(Error::Invalid("true Sigma requested but the sample carries no oracle".into())),
        },
    }?;
    if matches!(est.method, CondVarMethod::Knn(_) | CondVarMethod::Projection) {
        est.values.iter_mut().for_each(|v| *v = v.max(floor));
    }
    Ok(est)
}

/// Fitted OSMD stage: `Sigma`, `h`, `Gamma` and the orthogonal plug-in.
struct OsmdStage {
    sigma: CondVarEstimate,
    h: FittedH,
    gamma: GammaEstimate,
    op: ThetaEstimate,
    resid: DVector<f64>,
    grad: DVector<f64>,
}

fn structure_for(kind: EstimatorKind, cfg: &PipelineConfig, p: usize) -> Structure {
    match kind {
        EstimatorKind::Pl => Structure::PartiallyLinear,
        EstimatorKind::Pa => Structure::default_additive(p, cfg.pa_spline_scalars),
        _ => Structure::Np,
    }
}

fn problem<'a>(
    sample: &'a Sample,
    bases: &'a Bases,
    cfg: &'a PipelineConfig,
    structure: &'a Structure,
    omega: Option<&'a DVector<f64>>,
    step_divisor: usize,
) -> SmdProblem<'a> {
    let mut p = SmdProblem::new(&sample.data, &bases.p_phi, &cfg.sieve, structure);
    p.multipliers = omega;
    p.seed = cfg.seed;
    p.step_divisor = step_divisor;
    p
}

fn osmd_stage(
    sample: &Sample,
    bases: &Bases,
    cfg: &PipelineConfig,
    ismd: &FittedH,
    warm: Option<&FittedH>,
    omega: Option<&DVector<f64>>,
    step_divisor: usize,
) -> Result<OsmdStage> {
    let data = &sample.data;
    let r_i = &data.y1 - ismd.eval(&data.y2)?;
    let sigma = resolve_sigma(cfg.sigma_smd, sample, &bases.p_phi, &r_i, sample.len(), cfg.sigma_rel_floor)?;
    let np = Structure::Np;
    let prob = problem(sample, bases, cfg, &np, omega, step_divisor);
    let h = fit_osmd(&prob, &sigma, warm.unwrap_or(ismd))?;
    let (hv, grad) = h.eval_with_grad(&data.y2)?;
    let resid = &data.y1 - hv;
    let gamma = estimate_gamma(&bases.p_phi, &grad, grad.mean(), &resid, &sigma)?;
    let op = theta_orthogonal_plugin_weighted(&h, &gamma, data, None, omega)?;
    Ok(OsmdStage {
        sigma,
        h,
        gamma,
        op,
        resid,
        grad,
    })
}

fn sigma0_for(st: &OsmdStage) -> Result<OrthoResidualStats> {
    sigma0_sq(&st.grad, st.op.theta, &st.gamma.values, &st.resid)
}

/// `kappa` for the identity or efficient score on one sample.
fn score_function(
    kind: ScoreKind,
    sample: &Sample,
    bases: &Bases,
    cfg: &PipelineConfig,
    osmd: Option<&OsmdStage>,
    n_ref: usize,
) -> Result<(ScoreFunction, Option<CondVarMethod>)> {
    let p_lam = bases.p_lambda();
    match kind {
        ScoreKind::IdentityScore => Ok((kappa_identity(&riesz_identity(&bases.nu, p_lam)?, p_lam)?, None)),
        ScoreKind::EfficientScore => {
            let st = osmd.ok_or_else(|| Error::Invalid("efficient score needs the OSMD stage".into()))?;
            let v: RieszEstimate = if cfg.sigma_score == SigmaChoice::WStar {
                riesz_optimal_via_wstar(&bases.nu, p_lam, &st.gamma, &st.sigma, &sigma0_for(st)?)?
            } else {
                riesz_optimal(&bases.nu, p_lam, &st.gamma, &st.sigma)?
            };
            let s = resolve_sigma(cfg.sigma_score, sample, p_lam, &st.resid, n_ref, cfg.sigma_rel_floor)?;
            let method = s.method;
            Ok((kappa_efficient(&st.gamma, &v, p_lam, &s)?, Some(method)))
        }
    }
}

fn crossfit(
    kind: ScoreKind,
    sample: &Sample,
    cfg: &PipelineConfig,
) -> Result<(ThetaEstimate, Option<CondVarMethod>)> {
    let plan = CrossfitPlan::new(sample.len(), cfg.seed)?;
    let n_ref = sample.len();
    let mut method = None;
    let est = theta_score_crossfit(&plan, &sample.data, kind, None, |idx, _train| {
        let fold = sample.subset(idx);
        let bases = Bases::build(&fold.data, cfg)?;
        let np = Structure::Np;
        let ismd = fit_ismd(&problem(&fold, &bases, cfg, &np, None, 1))?;
        let (h, osmd) = match kind {
            ScoreKind::IdentityScore => (ismd, None),
            ScoreKind::EfficientScore => {
                let st = osmd_stage(&fold, &bases, cfg, &ismd, None, None, 1)?;
                (st.h.clone(), Some(st))
            }
        };
        let (score, m) = score_function(kind, &fold, &bases, cfg, osmd.as_ref(), n_ref)?;
        method = m;
        let p_lam = Projector::new(&bases.lambda.design(&fold.data.x, false)?.values)?;
        let xi = p_lam.coefficients(&score.kappa)?;
        Ok(FoldNuisances {
            h,
            lambda: bases.lambda,
            xi,
        })
    })?;
    Ok((est, method))
}

/// Full-sample fits shared by the estimators of one run.
pub struct PointFits {
    bases: Bases,
    ismd: Option<FittedH>,
    osmd: Option<OsmdStage>,
}

impl PointFits {
    pub fn ismd(&self) -> Option<&FittedH> {
        self.ismd.as_ref()
    }

    pub fn osmd(&self) -> Option<&FittedH> {
        self.osmd.as_ref().map(|s| &s.h)
    }
}

/// Runs `estimators` on `sample`; results follow the requested order.
pub fn run_pipeline(
    sample: &Sample,
    cfg: &PipelineConfig,
    estimators: &[EstimatorKind],
) -> Result<(Vec<EstimatorResult>, PointFits)> {
    cfg.validate()?;
    if sample.len() < 4 {
        return Err(Error::TooSmall {
            n: sample.len(),
            reason: "estimation needs at least four observations".into(),
        });
    }
    let data = &sample.data;
    let bases = Bases::build(data, cfg)?;
    let np = Structure::Np;
    let need_ismd = estimators.iter().any(|e| {
        matches!(
            e,
            EstimatorKind::PIsmd | EstimatorKind::OpOsmd | EstimatorKind::Is | EstimatorKind::Es
        )
    });
    let ismd = if need_ismd {
        Some(fit_ismd(&problem(sample, &bases, cfg, &np, None, 1))?)
    } else {
        None
    };
    let osmd = match (&ismd, estimators.iter().any(EstimatorKind::needs_osmd)) {
        (Some(h), true) => Some(osmd_stage(sample, &bases, cfg, h, None, None, 1)?),
        _ => None,
    };
    let n = sample.len();
    let mut out = Vec::with_capacity(estimators.len());
    for &kind in estimators {
        let res = match kind {
            EstimatorKind::PIsmd => {
                let h = ismd.as_ref().expect("ISMD fitted");
                let sp = theta_simple_plugin_weighted(h, data, None, None)?;
                let w = riesz_identity(&bases.nu, bases.p_lambda())?;
                let sandwich = variance_ismd_sandwich(&w, bases.p_lambda(), data, h)?;
                let mut r = EstimatorResult::new(kind, sp.theta).with_fit(h);
                r.se = Some(sandwich.se);
                r.se_method = Some(VarianceMethod::IsmdSandwich);
                r.se_ismd_formula = variance_ismd(&w, bases.p_lambda(), data, h).ok().map(|v| v.se);
                r
            }
            EstimatorKind::OpOsmd => {
                let st = osmd.as_ref().expect("OSMD fitted");
                let s0 = sigma0_for(st)?;
                let mut r = EstimatorResult::new(kind, st.op.theta).with_fit(&st.h);
                match variance_osmd_bound(&bases.nu, bases.p_lambda(), &st.gamma, &st.sigma, &s0) {
                    Ok(v) => {
                        r.se = Some(v.se);
                        r.se_method = Some(VarianceMethod::OsmdBound);
                    }
                    Err(e) => log::warn!("op-osmd bound variance unavailable: {e}"),
                }
                r.diagnostics.sigma_smd = Some(st.sigma.method);
                r.diagnostics.sigma0_sq = Some(s0.sigma0_sq);
                r
            }
            EstimatorKind::Is | EstimatorKind::Es => {
                let (score_kind, h) = if kind == EstimatorKind::Is {
                    (ScoreKind::IdentityScore, ismd.as_ref().expect("ISMD fitted"))
                } else {
                    (ScoreKind::EfficientScore, &osmd.as_ref().expect("OSMD fitted").h)
                };
                let (score, m) = score_function(score_kind, sample, &bases, cfg, osmd.as_ref(), n)?;
                let est = theta_score(h, &score, data, None)?;
                let v = se_from_scores(&est.per_obs)?;
                let mut r = EstimatorResult::new(kind, est.theta).with_fit(h);
                r.se = Some(v.se);
                r.se_method = Some(VarianceMethod::ScoreSampleVar);
                r.diagnostics.sigma_score = m;
                r.diagnostics.sigma_smd = osmd.as_ref().filter(|_| kind == EstimatorKind::Es).map(|s| s.sigma.method);
                r.diagnostics.kappa_mean = Some(score.kappa.mean());
                r
            }
            EstimatorKind::IsX | EstimatorKind::EsX => {
                let sk = if kind == EstimatorKind::IsX {
                    ScoreKind::IdentityScore
                } else {
                    ScoreKind::EfficientScore
                };
                let (est, m) = crossfit(sk, sample, cfg)?;
                let v = se_from_scores(&est.per_obs)?;
                let mut r = EstimatorResult::new(kind, est.theta);
                r.se = Some(v.se);
                r.se_method = Some(VarianceMethod::ScoreSampleVar);
                r.diagnostics.sigma_score = m;
                r
            }
            EstimatorKind::Pl | EstimatorKind::Pa => {
                let st = structure_for(kind, cfg, data.y2.ncols());
                let (h, est) = fit_structured(&problem(sample, &bases, cfg, &st, None, 1))?;
                EstimatorResult::new(kind, est.theta).with_fit(&h)
            }
        };
        out.push(res);
    }
    Ok((out, PointFits { bases, ismd, osmd }))
}

/// One bootstrap replicate of an SMD estimator; `Sync`, so draws can be
/// evaluated in any order or in parallel.
pub struct BootstrapContext<'a> {
    sample: &'a Sample,
    cfg: &'a PipelineConfig,
    fits: &'a PointFits,
    kind: EstimatorKind,
    step_divisor: usize,
}

/// Step budget divisor for warm-started network refits in bootstrap draws.
pub const BOOTSTRAP_STEP_DIVISOR: usize = 5;

impl<'a> BootstrapContext<'a> {
    pub fn new(sample: &'a Sample, cfg: &'a PipelineConfig, fits: &'a PointFits, kind: EstimatorKind) -> Result<Self> {
        if !kind.bootstrappable() {
            return Err(Error::Invalid(alloc::format!("no SMD bootstrap for estimator {kind}")));
        }
        if fits.ismd.is_none() || (kind == EstimatorKind::OpOsmd && fits.osmd.is_none()) {
            return Err(Error::Invalid("bootstrap needs the point-estimate fits".into()));
        }
        let step_divisor = if cfg.is_ann() { BOOTSTRAP_STEP_DIVISOR } else { 1 };
        Ok(Self {
            sample,
            cfg,
            fits,
            kind,
            step_divisor,
        })
    }

    /// Number of observations (length of a multiplier vector).
    pub fn sample_len(&self) -> usize {
        self.sample.len()
    }

    /// Refits under multipliers `omega` and returns the draw of `theta`.
    pub fn draw(&self, omega: &DVector<f64>) -> Result<f64> {
        let np = Structure::Np;
        let point_ismd = self.fits.ismd.as_ref().expect("checked in new");
        let prob = problem(self.sample, &self.fits.bases, self.cfg, &np, Some(omega), self.step_divisor);
        let ismd = fit_ismd_from(&prob, point_ismd)?;
        match self.kind {
            EstimatorKind::PIsmd => Ok(theta_simple_plugin_weighted(&ismd, &self.sample.data, None, Some(omega))?.theta),
            _ => {
                let warm = self.fits.osmd.as_ref().map(|s| &s.h);
                let st = osmd_stage(
                    self.sample,
                    &self.fits.bases,
                    self.cfg,
                    &ismd,
                    warm,
                    Some(omega),
                    self.step_divisor,
                )?;
                Ok(st.op.theta)
            }
        }
    }
}

/// Serial multiplier bootstrap: draw `b` uses substream `b` of `seed`.
pub fn bootstrap_smd(
    ctx: &BootstrapContext<'_>,
    draws: usize,
    seed: u64,
    level: f64,
    law: MultiplierLaw,
) -> Result<BootstrapResult> {
    if draws == 0 {
        return Err(Error::Invalid("bootstrap needs at least one draw".into()));
    }
    let n = ctx.sample_len();
    let outcomes = (0..draws as u64)
        .map(|b| ctx.draw(&bootstrap_multipliers(law, seed, b, n)))
        .collect();
    summarize_bootstrap(outcomes, level, law)
}

/// Least-squares (`P = I`) fit of `y1` on `y2`, for regression designs.
pub fn fit_regression(data: &Dataset, sieve: &HSieve, seed: u64) -> Result<FittedH> {
    let p = Projector::identity(data.len());
    let st = Structure::Np;
    let mut prob = SmdProblem::new(data, &p, sieve, &st);
    prob.seed = seed;
    fit_ismd(&prob)
}
