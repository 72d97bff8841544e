//! Sieve minimum distance estimation of `h` and the plug-in estimators.
//!
//! A fitted `h` is a linear sieve part `L(y2) gamma` plus any number of
//! network components, each reading a subset of the `y2` columns. Fits with
//! no network part are solved in closed form; otherwise all parameters are
//! trained jointly with Adam, the linear coefficients starting from their
//! closed-form values given the initial networks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ann::{
    forward_cached, grad_input, grad_params_cached, train, Activation, AdamState, NetParams,
    NetSpec, NeuralNet, ParamSegment, StoppingRule,
};
use crate::data::{select_cols, Dataset};
use crate::error::{check_finite, check_len, Error, Result};
use crate::nuisance::{CondVarEstimate, GammaEstimate};
use crate::sieve::{BasisSpec, Projector, Sieve};

/// Network sieve settings (architecture plus optimizer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnConfig {
    pub activation: Activation,
    pub hidden_widths: Vec<usize>,
    pub lr: f64,
    pub rule: StoppingRule,
}

impl AnnConfig {
    pub fn new(activation: Activation, layers: usize, width: usize, lr: f64, rule: StoppingRule) -> Self {
        Self {
            activation,
            hidden_widths: vec![width; layers],
            lr,
            rule,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HSieve {
    Spline(Vec<BasisSpec>),
    Ann(AnnConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Structure {
    /// Fully nonparametric `h(y2)`.
    Np,
    /// `theta * y2[0] + h1(y2[1..])`.
    PartiallyLinear,
    /// `theta * y2[0] + sum_g h_g(y2[g])`. Single-column groups use a
    /// univariate `Spline(3, 2)` when `spline_scalars` is set; all other
    /// groups use the sieve's network (or its spline specs).
    PartiallyAdditive {
        groups: Vec<Vec<usize>>,
        spline_scalars: bool,
    },
}

impl Structure {
    /// Groups `[[1], [2], [3, .., p - 1]]` for the simulation column layout;
    /// the last group is dropped when empty.
    pub fn default_additive(p: usize, spline_scalars: bool) -> Self {
        let mut groups = vec![vec![1], vec![2]];
        if p > 3 {
            groups.push((3..p).collect());
        }
        Structure::PartiallyAdditive {
            groups,
            spline_scalars,
        }
    }

    pub fn is_structured(&self) -> bool {
        !matches!(self, Structure::Np)
    }
}

/// One network term of `h`, reading `columns` of `y2`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetComponent {
    pub columns: Vec<usize>,
    pub net: NeuralNet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedH {
    pub linear: Option<(Sieve, DVector<f64>)>,
    pub nets: Vec<NetComponent>,
    /// Final value of the SMD criterion.
    pub criterion: f64,
    /// Optimizer loss trace (empty for closed-form fits).
    pub trace: Vec<f64>,
    pub steps: usize,
}

impl FittedH {
    /// `h(y2)` and `d h / d y2[0]`.
    pub fn eval_with_grad(&self, y2: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = y2.nrows();
        let mut h = DVector::zeros(n);
        let mut g = DVector::zeros(n);
        if let Some((sieve, coef)) = &self.linear {
            let dm = sieve.design(y2, true)?;
            h += &dm.values * coef;
            g += dm.require_derivative()? * coef;
        }
        for c in &self.nets {
            let inputs = select_cols(y2, &c.columns);
            h += c.net.forward(&inputs)?;
            if let Some(pos) = c.columns.iter().position(|&j| j == 0) {
                g += grad_input(&c.net.spec, &c.net.params.values, &inputs, pos)?;
            }
        }
        Ok((h, g))
    }

    pub fn eval(&self, y2: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.eval_with_grad(y2).map(|(h, _)| h)
    }

    pub fn grad1(&self, y2: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.eval_with_grad(y2).map(|(_, g)| g)
    }

    /// Coefficient on `y2[0]` for partially linear/additive fits.
    pub fn linear_theta(&self) -> Option<f64> {
        self.linear.as_ref().and_then(|(s, c)| {
            let spec = s.specs().into_iter().next()?;
            (spec.columns.as_deref() == Some(&[0][..]) && spec.order == 1).then(|| c[1])
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Weight<'a> {
    Identity,
    Optimal(&'a CondVarEstimate),
}

/// One SMD estimation problem on a fixed sample.
#[derive(Clone, Copy, Debug)]
pub struct SmdProblem<'a> {
    pub data: &'a Dataset,
    /// Projection onto the instrument basis `phi(x)`.
    pub p_phi: &'a Projector,
    pub sieve: &'a HSieve,
    pub structure: &'a Structure,
    /// Bootstrap multipliers applied to the residuals.
    pub multipliers: Option<&'a DVector<f64>>,
    /// Seed for network initialization.
    pub seed: u64,
    /// Divides the optimizer step budget (warm-started refits).
    pub step_divisor: usize,
}

impl<'a> SmdProblem<'a> {
    pub fn new(data: &'a Dataset, p_phi: &'a Projector, sieve: &'a HSieve, structure: &'a Structure) -> Self {
        Self {
            data,
            p_phi,
            sieve,
            structure,
            multipliers: None,
            seed: 0,
            step_divisor: 1,
        }
    }
}

/// `(1/n) |W^{1/2} P (omega * (y - h))|^2` and its gradient in `h`.
pub fn smd_criterion(
    p_phi: &Projector,
    y: &DVector<f64>,
    h: &DVector<f64>,
    weight: Weight<'_>,
    multipliers: Option<&DVector<f64>>,
) -> Result<(f64, DVector<f64>)> {
    let n = y.len();
    check_len("smd outcome", p_phi.nrows(), n)?;
    check_len("smd fitted values", n, h.len())?;
    check_finite("smd fitted values", h.as_slice())?;
    let w = weight_vector(weight, n)?;
    let mut rho = y - h;
    if let Some(om) = multipliers {
        check_len("smd multipliers", n, om.len())?;
        rho.component_mul_assign(om);
    }
    let u = p_phi.project(&rho)?;
    let wu = u.component_mul(&w);
    let loss = u.dot(&wu) / n as f64;
    let mut grad = p_phi.project(&wu)? * (-2.0 / n as f64);
    if let Some(om) = multipliers {
        grad.component_mul_assign(om);
    }
    Ok((loss, grad))
}

fn weight_vector(weight: Weight<'_>, n: usize) -> Result<DVector<f64>> {
    match weight {
        Weight::Identity => Ok(DVector::from_element(n, 1.0)),
        Weight::Optimal(s) => {
            check_len("smd weight", n, s.len())?;
            if s.values.iter().any(|&v| v <= 0.0) {
                return Err(Error::Invalid("optimal weight needs positive Sigma".into()));
            }
            Ok(s.inverse())
        }
    }
}

struct Layout {
    linear: Vec<BasisSpec>,
    nets: Vec<(Vec<usize>, NetSpec)>,
}

fn layout(sieve: &HSieve, structure: &Structure, p: usize) -> Result<Layout> {
    let theta_term = || BasisSpec::polynomial(1).on_columns(vec![0]);
    let incompatible = |what: &str| Error::Invalid(format!("structure incompatible with data: {what}"));
    let rest_specs = |specs: &[BasisSpec], cols: Vec<usize>| -> Result<Vec<BasisSpec>> {
        specs
            .iter()
            .map(|s| {
                let mut s = s.clone();
                match &s.columns {
                    Some(c) if c.contains(&0) => Err(incompatible("linear term column reused")),
                    Some(_) => Ok(s.without_intercept()),
                    None => {
                        s.columns = Some(cols.clone());
                        Ok(s.without_intercept())
                    }
                }
            })
            .collect()
    };
    let net = |cfg: &AnnConfig, cols: Vec<usize>| -> Result<(Vec<usize>, NetSpec)> {
        let spec = NetSpec::new(cols.len(), cfg.hidden_widths.clone(), cfg.activation)?;
        Ok((cols, spec))
    };
    match (structure, sieve) {
        (Structure::Np, HSieve::Spline(specs)) => Ok(Layout {
            linear: specs.clone(),
            nets: Vec::new(),
        }),
        (Structure::Np, HSieve::Ann(cfg)) => Ok(Layout {
            linear: Vec::new(),
            nets: vec![net(cfg, (0..p).collect())?],
        }),
        (Structure::PartiallyLinear, _) if p < 2 => Err(incompatible("partially linear needs p >= 2")),
        (Structure::PartiallyLinear, HSieve::Spline(specs)) => {
            let mut linear = vec![theta_term()];
            linear.extend(rest_specs(specs, (1..p).collect())?);
            Ok(Layout {
                linear,
                nets: Vec::new(),
            })
        }
        (Structure::PartiallyLinear, HSieve::Ann(cfg)) => Ok(Layout {
            linear: vec![theta_term()],
            nets: vec![net(cfg, (1..p).collect())?],
        }),
        (
            Structure::PartiallyAdditive {
                groups,
                spline_scalars,
            },
            _,
        ) => {
            let mut linear = vec![theta_term()];
            let mut nets = Vec::new();
            for g in groups.iter().filter(|g| !g.is_empty()) {
                if g.iter().any(|&c| c == 0 || c >= p) {
                    return Err(incompatible("additive group column out of range or equal to 0"));
                }
                let scalar_spline = g.len() == 1 && *spline_scalars;
                match sieve {
                    _ if scalar_spline => {
                        linear.push(BasisSpec::spline(3).on_columns(g.clone()).without_intercept())
                    }
                    HSieve::Spline(specs) => linear.extend(rest_specs(specs, g.clone())?),
                    HSieve::Ann(cfg) => nets.push(net(cfg, g.clone())?),
                }
            }
            Ok(Layout { linear, nets })
        }
    }
}

/// State shared by the closed-form and gradient paths of one fit.
struct FitContext<'a> {
    y: &'a DVector<f64>,
    p_phi: &'a Projector,
    omega: Option<&'a DVector<f64>>,
    sqrt_w: DVector<f64>,
    design: Option<DMatrix<f64>>,
}

impl FitContext<'_> {
    fn scale_rows(&self, m: &mut DMatrix<f64>) {
        if let Some(om) = self.omega {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    m[(i, j)] *= om[i];
                }
            }
        }
    }

    /// Closed-form linear coefficients given the current network output.
    fn linear_solve(&self, h_nets: &DVector<f64>) -> Result<DVector<f64>> {
        let l = self.design.as_ref().expect("linear design present");
        let mut m = l.clone();
        self.scale_rows(&mut m);
        let mut b = self.y - h_nets;
        if let Some(om) = self.omega {
            b.component_mul_assign(om);
        }
        let mut pm = self.p_phi.project_matrix(&m)?;
        let mut pb = self.p_phi.project(&b)?;
        for i in 0..pm.nrows() {
            let s = self.sqrt_w[i];
            pb[i] *= s;
            for j in 0..pm.ncols() {
                pm[(i, j)] *= s;
            }
        }
        Projector::new(&pm)?.coefficients(&pb)
    }
}

fn fit_with_weight(
    problem: &SmdProblem<'_>,
    weight: Weight<'_>,
    warm: Option<&FittedH>,
) -> Result<FittedH> {
    let data = problem.data;
    let n = data.len();
    check_len("smd instrument rows", n, problem.p_phi.nrows())?;
    let y2 = &data.y2;
    let lay = layout(problem.sieve, problem.structure, y2.ncols())?;
    let sieve = if lay.linear.is_empty() {
        None
    } else {
        Some(match warm.and_then(|w| w.linear.as_ref()) {
            Some((s, _)) => s.clone(),
            None => Sieve::fit(y2, &lay.linear)?,
        })
    };
    let design = match &sieve {
        Some(s) => Some(s.design(y2, false)?.values),
        None => None,
    };
    let w = weight_vector(weight, n)?;
    let ctx = FitContext {
        y: &data.y1,
        p_phi: problem.p_phi,
        omega: problem.multipliers,
        sqrt_w: w.map(libm::sqrt),
        design,
    };

    if lay.nets.is_empty() {
        let coef = ctx.linear_solve(&DVector::zeros(n))?;
        let h = ctx.design.as_ref().expect("linear design") * &coef;
        let (criterion, _) = smd_criterion(problem.p_phi, &data.y1, &h, weight, problem.multipliers)?;
        return Ok(FittedH {
            linear: sieve.map(|s| (s, coef)),
            nets: Vec::new(),
            criterion,
            trace: Vec::new(),
            steps: 0,
        });
    }

    let HSieve::Ann(cfg) = problem.sieve else {
        return Err(Error::Invalid("network components need an ANN sieve".into()));
    };
    let inputs: Vec<DMatrix<f64>> = lay.nets.iter().map(|(c, _)| select_cols(y2, c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let nets: Vec<NetParams> = match warm {
        Some(wf) if wf.nets.len() == lay.nets.len() => wf.nets.iter().map(|c| c.net.params.clone()).collect(),
        _ => lay.nets.iter().map(|(_, s)| NetParams::init(s, &mut rng)).collect(),
    };
    let k_lin = ctx.design.as_ref().map_or(0, |d| d.ncols());
    let mut params: Vec<f64> = Vec::new();
    let mut h_nets = DVector::zeros(n);
    for ((_, spec), (p, x)) in lay.nets.iter().zip(nets.iter().zip(&inputs)) {
        h_nets += crate::ann::forward(spec, &p.values, x)?;
    }
    let coef0 = match (warm.and_then(|w| w.linear.as_ref()), k_lin) {
        (_, 0) => DVector::zeros(0),
        (Some((_, c)), _) => c.clone(),
        (None, _) => ctx.linear_solve(&h_nets)?,
    };
    params.extend_from_slice(coef0.as_slice());
    let mut segments = vec![ParamSegment {
        name: "linear".into(),
        range: 0..k_lin,
    }];
    let mut offsets = Vec::new();
    for (k, ((_, spec), p)) in lay.nets.iter().zip(&nets).enumerate() {
        offsets.push(params.len());
        segments.extend(spec.segments(params.len(), &format!("net{}.", k + 1)));
        params.extend_from_slice(&p.values);
    }

    let objective = |theta: &[f64], grad: &mut [f64]| -> Result<f64> {
        let mut h = DVector::zeros(n);
        if let Some(l) = &ctx.design {
            h += l * DVector::from_column_slice(&theta[..k_lin]);
        }
        let mut caches = Vec::with_capacity(lay.nets.len());
        for (k, (_, spec)) in lay.nets.iter().enumerate() {
            let range = offsets[k]..offsets[k] + spec.num_params();
            let (out, cache) = forward_cached(spec, &theta[range], &inputs[k])?;
            h += out;
            caches.push(cache);
        }
        let (loss, g_h) = smd_criterion(ctx.p_phi, ctx.y, &h, weight, ctx.omega)?;
        if let Some(l) = &ctx.design {
            let gl = l.tr_mul(&g_h);
            grad[..k_lin].copy_from_slice(gl.as_slice());
        }
        for (k, (_, spec)) in lay.nets.iter().enumerate() {
            let range = offsets[k]..offsets[k] + spec.num_params();
            grad_params_cached(spec, &theta[range.clone()], &caches[k], g_h.as_slice(), &mut grad[range])?;
        }
        Ok(loss)
    };
    let rule = cfg.rule.shortened(problem.step_divisor.max(1));
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let report = train(&mut params, &segments, objective, &rule, &mut adam)?;

    let linear = sieve.map(|s| (s, DVector::from_column_slice(&params[..k_lin])));
    let nets = lay
        .nets
        .iter()
        .enumerate()
        .map(|(k, (cols, spec))| NetComponent {
            columns: cols.clone(),
            net: NeuralNet {
                spec: spec.clone(),
                params: NetParams {
                    values: params[offsets[k]..offsets[k] + spec.num_params()].to_vec(),
                },
            },
        })
        .collect();
    Ok(FittedH {
        linear,
        nets,
        criterion: *report.trace.last().unwrap_or(&f64::NAN),
        trace: report.trace,
        steps: report.steps,
    })
}

/// Identity-weighted SMD.
pub fn fit_ismd(problem: &SmdProblem<'_>) -> Result<FittedH> {
    fit_with_weight(problem, Weight::Identity, None)
}

/// Identity-weighted SMD warm-started from `start` (network parameters and
/// linear coefficients; the linear sieve's knots are reused).
pub fn fit_ismd_from(problem: &SmdProblem<'_>, start: &FittedH) -> Result<FittedH> {
    fit_with_weight(problem, Weight::Identity, Some(start))
}

/// Optimally weighted SMD with `W = diag(Sigma)^{-1}`; network fits
/// warm-start from `preliminary`.
pub fn fit_osmd(problem: &SmdProblem<'_>, sigma: &CondVarEstimate, preliminary: &FittedH) -> Result<FittedH> {
    fit_with_weight(problem, Weight::Optimal(sigma), Some(preliminary))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaKind {
    SimplePlugin,
    OrthogonalPlugin,
    IdentityScore,
    EfficientScore,
    Structured,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub kind: ThetaKind,
    /// Per-observation terms whose (weighted) mean is `theta`.
    pub per_obs: DVector<f64>,
}

/// Mean, or `omega`-weighted mean `sum(omega v) / sum(omega)`.
pub fn weighted_mean(v: &DVector<f64>, omega: Option<&DVector<f64>>) -> f64 {
    match omega {
        None => v.mean(),
        Some(om) => v.dot(om) / om.sum(),
    }
}

fn apply_a(mut g: DVector<f64>, a: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    if let Some(a) = a {
        check_len("weight function values", g.len(), a.len())?;
        g.component_mul_assign(a);
    }
    Ok(g)
}

/// Mean of `a(y2) grad1 h(y2)`; `a` holds the weight function's values
/// (`None` means `a = 1`).
pub fn theta_simple_plugin(fitted: &FittedH, data: &Dataset, a: Option<&DVector<f64>>) -> Result<ThetaEstimate> {
    theta_simple_plugin_weighted(fitted, data, a, None)
}

pub fn theta_simple_plugin_weighted(
    fitted: &FittedH,
    data: &Dataset,
    a: Option<&DVector<f64>>,
    omega: Option<&DVector<f64>>,
) -> Result<ThetaEstimate> {
    let per_obs = apply_a(fitted.grad1(&data.y2)?, a)?;
    Ok(ThetaEstimate {
        theta: weighted_mean(&per_obs, omega),
        kind: ThetaKind::SimplePlugin,
        per_obs,
    })
}

/// Mean of `a(y2) grad1 h - Gamma(x) (y1 - h)`.
pub fn theta_orthogonal_plugin(
    fitted: &FittedH,
    gamma: &GammaEstimate,
    data: &Dataset,
    a: Option<&DVector<f64>>,
) -> Result<ThetaEstimate> {
    theta_orthogonal_plugin_weighted(fitted, gamma, data, a, None)
}

pub fn theta_orthogonal_plugin_weighted(
    fitted: &FittedH,
    gamma: &GammaEstimate,
    data: &Dataset,
    a: Option<&DVector<f64>>,
    omega: Option<&DVector<f64>>,
) -> Result<ThetaEstimate> {
    check_len("gamma values", data.len(), gamma.values.len())?;
    let (h, g) = fitted.eval_with_grad(&data.y2)?;
    let g = apply_a(g, a)?;
    let per_obs = g - gamma.values.component_mul(&(&data.y1 - h));
    Ok(ThetaEstimate {
        theta: weighted_mean(&per_obs, omega),
        kind: ThetaKind::OrthogonalPlugin,
        per_obs,
    })
}

/// SMD over a partially linear/additive family; `theta` is the fitted
/// coefficient on `y2[0]`.
pub fn fit_structured(problem: &SmdProblem<'_>) -> Result<(FittedH, ThetaEstimate)> {
    if !problem.structure.is_structured() {
        return Err(Error::Invalid("fit_structured needs a PL or PA structure".into()));
    }
    let fitted = fit_ismd(problem)?;
    let theta = fitted
        .linear_theta()
        .ok_or_else(|| Error::Invalid("structured fit lacks a linear coefficient".into()))?;
    let n = problem.data.len();
    Ok((
        fitted,
        ThetaEstimate {
            theta,
            kind: ThetaKind::Structured,
            per_obs: DVector::from_element(n, theta),
        },
    ))
}
