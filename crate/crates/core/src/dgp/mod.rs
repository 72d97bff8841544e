//! Monte Carlo designs with known targets and oracle nuisances.
//!
//! Column layouts:
//! * MC2 / MC3: `y2 = [R1, R2, X2, X~]`, `x = [X1, X2, X3, X~]`.
//! * A1: `y2 = [X1, R, X2, X~]`, `x = [X1, X2, X3, X~]`.
//! * simple(b): `y2 = [R2, W]`, `x = [W, Z]`.
//! * simple(a) is a regression: `y2 = x = X`.

mod consts;

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use consts::SIMPLE_B_MAX_P;

/// `var f(X)` for the simple(a) network under `X ~ N(0, I)`.
pub const SIMPLE_A_SIGNAL_VAR: f64 = 14.0;
/// Size of the simple(a) evaluation sample.
pub const SIMPLE_A_HELDOUT: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignId {
    SimpleA { noise_ratio: f64 },
    SimpleB { p: usize },
    Mc2 { dim_xtilde: usize, rho: f64 },
    Mc3a { dim_xtilde: usize, rho: f64 },
    Mc3b { dim_xtilde: usize, rho: f64 },
    McA1 { dim_xtilde: usize, rho: f64 },
}

impl DesignId {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DesignId::SimpleA { noise_ratio } if !(noise_ratio >= 0.0 && noise_ratio.is_finite()) => {
                Err(Error::Invalid("noise_ratio must be a finite non-negative number".into()))
            }
            DesignId::SimpleB { p } if p == 0 || p > SIMPLE_B_MAX_P => Err(Error::Invalid(alloc::format!(
                "simple(b) supports 1 <= p <= {SIMPLE_B_MAX_P}"
            ))),
            DesignId::Mc2 { rho, .. }
            | DesignId::Mc3a { rho, .. }
            | DesignId::Mc3b { rho, .. }
            | DesignId::McA1 { rho, .. }
                if !(-1.0..=1.0).contains(&rho) =>
            {
                Err(Error::Invalid("rho must lie in [-1, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn theta_true(&self) -> Option<f64> {
        match self {
            DesignId::SimpleA { .. } => None,
            _ => Some(1.0),
        }
    }

    /// Short label used in file names and tables.
    pub fn label(&self) -> alloc::string::String {
        match *self {
            DesignId::SimpleA { noise_ratio } => alloc::format!("simple_a[noise={noise_ratio}]"),
            DesignId::SimpleB { p } => alloc::format!("simple_b[p={p}]"),
            DesignId::Mc2 { dim_xtilde, rho } => alloc::format!("mc2[d={dim_xtilde},rho={rho}]"),
            DesignId::Mc3a { dim_xtilde, rho } => alloc::format!("mc3a[d={dim_xtilde},rho={rho}]"),
            DesignId::Mc3b { dim_xtilde, rho } => alloc::format!("mc3b[d={dim_xtilde},rho={rho}]"),
            DesignId::McA1 { dim_xtilde, rho } => alloc::format!("mca1[d={dim_xtilde},rho={rho}]"),
        }
    }
}

/// Evaluation points for regression designs.
#[derive(Clone, Debug, PartialEq)]
pub struct Heldout {
    pub x: DMatrix<f64>,
    pub f: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimSample {
    pub data: Dataset,
    pub theta_true: Option<f64>,
    /// `h0(y2)` at the sample points.
    pub h0: DVector<f64>,
    /// `d h0 / d y2[0]` at the sample points.
    pub grad1_h0: DVector<f64>,
    /// True `Sigma(x) = var(y1 - h0(y2) | x)`.
    pub sigma: DVector<f64>,
    pub heldout: Option<Heldout>,
}

/// Draws a sample of size `n` from `design`.
pub fn generate(design: &DesignId, n: usize, seed: u64) -> Result<SimSample> {
    design.validate()?;
    if n == 0 {
        return Err(Error::Invalid("sample size must be positive".into()));
    }
    match *design {
        DesignId::SimpleA { noise_ratio } => gen_simple_a(n, noise_ratio, seed),
        DesignId::SimpleB { p } => gen_simple_b(n, p, seed),
        DesignId::Mc2 { dim_xtilde, rho } => gen_mc2(n, dim_xtilde, rho, seed),
        DesignId::Mc3a { dim_xtilde, rho } => gen_mc3(Mc3Variant::A, n, dim_xtilde, rho, seed),
        DesignId::Mc3b { dim_xtilde, rho } => gen_mc3(Mc3Variant::B, n, dim_xtilde, rho, seed),
        DesignId::McA1 { dim_xtilde, rho } => gen_mca1(n, dim_xtilde, rho, seed),
    }
}

#[inline]
fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Logistic function `1 / (1 + e^{-t})`.
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-t))
}

/// `5 x1^3 + x2 * max_j(x_j v 0.5) + 0.5 exp(-x_d)`; zero when `d = 0`.
/// With `d = 1` the middle term (which needs `x2`) is dropped.
pub fn h03(xt: &[f64]) -> f64 {
    let d = xt.len();
    if d == 0 {
        return 0.0;
    }
    let mut v = 5.0 * xt[0] * xt[0] * xt[0] + 0.5 * libm::exp(-xt[d - 1]);
    if d >= 2 {
        let m = xt.iter().fold(0.5_f64, |m, &x| m.max(x));
        v += xt[1] * m;
    }
    v
}

const XTILDE_COV_SEED: u64 = 0x7E57_C0DE;

/// Unit-diagonal covariance `prop. to I + Z'Z` for `X~`, identical for every
/// call with the same `d`.
pub fn xtilde_covariance(d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(XTILDE_COV_SEED);
    rng.set_stream(d as u64);
    let z = DMatrix::from_fn(d, d, |_, _| normal(&mut rng));
    let s = DMatrix::identity(d, d) + z.transpose() * z;
    DMatrix::from_fn(d, d, |i, j| s[(i, j)] / libm::sqrt(s[(i, i)] * s[(j, j)]))
}

fn xtilde_factor(d: usize) -> DMatrix<f64> {
    if d == 0 {
        return DMatrix::zeros(0, 0);
    }
    xtilde_covariance(d)
        .cholesky()
        .expect("I + Z'Z is positive definite")
        .unpack()
}

/// `X~ = Phi(rho (X1 + X2 + X3) + sqrt(1 - rho^2) T)`, `T ~ N(0, Sigma~)`.
fn draw_xtilde<R: Rng>(rng: &mut R, chol: &DMatrix<f64>, rho: f64, sum_x: f64, out: &mut [f64]) {
    let d = out.len();
    let e: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let scale = libm::sqrt(1.0 - rho * rho);
    for i in 0..d {
        let t: f64 = (0..=i).map(|k| chol[(i, k)] * e[k]).sum();
        out[i] = norm_cdf(rho * sum_x + scale * t);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mc3Variant {
    A,
    B,
}

const MC3B_A: f64 = -1.0;
const MC3B_B: f64 = 16.0;

fn logistic_slope(t: f64) -> f64 {
    let s = sigmoid(t);
    s * (1.0 - s)
}

/// `C = int_0^1 f(a (r - b)) dr` by composite 8-point Gauss-Legendre.
pub fn mc3b_normaliser() -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let panels = 64;
    let h = 1.0 / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            for s in [-1.0, 1.0] {
                let r = mid + s * x * h / 2.0;
                total += w * logistic_slope(MC3B_A * (r - MC3B_B)) * h / 2.0;
            }
        }
    }
    total
}

struct Mc2Row {
    x: [f64; 3],
    r1: f64,
    r2: f64,
    u: f64,
}

fn draw_mc2_row<R: Rng>(rng: &mut R) -> Mc2Row {
    let u1 = normal(rng);
    let u2 = normal(rng);
    let u3 = normal(rng);
    let v2 = normal(rng);
    let v3 = normal(rng);
    let v = libm::sqrt(0.1) * normal(rng);
    let x2: f64 = rng.random::<f64>();
    let x1 = norm_cdf(v2);
    let x3 = norm_cdf(v3);
    let r1 = x1 + 0.5 * u2 + v;
    let r2 = norm_cdf(v3 + 0.5 * u3);
    let sd = libm::sqrt((x1 * x1 + x2 * x2 + x3 * x3) / 3.0);
    Mc2Row {
        x: [x1, x2, x3],
        r1,
        r2,
        u: (u1 + u2 + u3) / 3.0 * sd,
    }
}

fn mc2_family(n: usize, d: usize, rho: f64, seed: u64, variant: Option<Mc3Variant>) -> Result<SimSample> {
    let chol = xtilde_factor(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 3 + d;
    let mut y1 = DVector::zeros(n);
    let mut y2 = DMatrix::zeros(n, p);
    let mut x = DMatrix::zeros(n, p);
    let mut h0 = DVector::zeros(n);
    let mut g0 = DVector::zeros(n);
    let mut sigma = DVector::zeros(n);
    let mut xt = alloc::vec![0.0; d];
    let c = mc3b_normaliser();
    for i in 0..n {
        let row = draw_mc2_row(&mut rng);
        let [x1, x2, x3] = row.x;
        draw_xtilde(&mut rng, &chol, rho, x1 + x2 + x3, &mut xt);
        let (r1_term, grad) = match variant {
            None => (row.r1, 1.0),
            Some(Mc3Variant::A) => (row.r1 * row.r1, 2.0 * row.r1),
            Some(Mc3Variant::B) => {
                let k = logistic_slope(MC3B_A * (x2 - MC3B_B)) / (2.0 * c);
                (row.r1 * row.r1 / 2.0 + row.r1 * k, row.r1 + k)
            }
        };
        let h = r1_term + sigmoid(row.r2) + libm::log(1.0 + x2) + h03(&xt);
        h0[i] = h;
        g0[i] = grad;
        y1[i] = h + row.u;
        sigma[i] = (x1 * x1 + x2 * x2 + x3 * x3) / 9.0;
        y2[(i, 0)] = row.r1;
        y2[(i, 1)] = row.r2;
        y2[(i, 2)] = x2;
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        x[(i, 2)] = x3;
        for j in 0..d {
            y2[(i, 3 + j)] = xt[j];
            x[(i, 3 + j)] = xt[j];
        }
    }
    Ok(SimSample {
        data: Dataset::new(y1, y2, x)?,
        theta_true: Some(1.0),
        h0,
        grad1_h0: g0,
        sigma,
        heldout: None,
    })
}

pub fn gen_mc2(n: usize, dim_xtilde: usize, rho: f64, seed: u64) -> Result<SimSample> {
    mc2_family(n, dim_xtilde, rho, seed, None)
}

pub fn gen_mc3(variant: Mc3Variant, n: usize, dim_xtilde: usize, rho: f64, seed: u64) -> Result<SimSample> {
    mc2_family(n, dim_xtilde, rho, seed, Some(variant))
}

pub fn gen_mca1(n: usize, dim_xtilde: usize, rho: f64, seed: u64) -> Result<SimSample> {
    let d = dim_xtilde;
    let chol = xtilde_factor(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 3 + d;
    let mut y1 = DVector::zeros(n);
    let mut y2 = DMatrix::zeros(n, p);
    let mut x = DMatrix::zeros(n, p);
    let mut h0 = DVector::zeros(n);
    let mut sigma = DVector::zeros(n);
    let mut xt = alloc::vec![0.0; d];
    for i in 0..n {
        let x1: f64 = rng.random::<f64>();
        let x2: f64 = rng.random::<f64>();
        let x3: f64 = rng.random::<f64>();
        let s2 = (x1 * x1 + x2 * x2 + x3 * x3) / 3.0;
        let u = libm::sqrt(s2) * normal(&mut rng);
        let eps = libm::sqrt(0.1) * normal(&mut rng);
        draw_xtilde(&mut rng, &chol, rho, x1 + x2 + x3, &mut xt);
        let r = x1 + x2 + x3 + 0.9 * u + eps;
        let h = x1 + sigmoid(r) + libm::log(1.0 + x2) + h03(&xt);
        h0[i] = h;
        y1[i] = h + u;
        sigma[i] = s2;
        y2[(i, 0)] = x1;
        y2[(i, 1)] = r;
        y2[(i, 2)] = x2;
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        x[(i, 2)] = x3;
        for j in 0..d {
            y2[(i, 3 + j)] = xt[j];
            x[(i, 3 + j)] = xt[j];
        }
    }
    Ok(SimSample {
        data: Dataset::new(y1, y2, x)?,
        theta_true: Some(1.0),
        h0,
        grad1_h0: DVector::from_element(n, 1.0),
        sigma,
        heldout: None,
    })
}

/// The simple(a) network `f(x) = a2' tanh(A1 x + b1) + b2` on `R^6`.
pub fn simple_a_f(x: &[f64]) -> f64 {
    let d = consts::SIMPLE_A_DIM;
    let mut out = consts::SIMPLE_A_B2;
    for k in 0..consts::SIMPLE_A_HIDDEN {
        let z: f64 = consts::SIMPLE_A_B1[k]
            + (0..d).map(|j| consts::SIMPLE_A_A1[k * d + j] * x[j]).sum::<f64>();
        out += consts::SIMPLE_A_A2[k] * libm::tanh(z);
    }
    out
}

pub fn simple_a_dim() -> usize {
    consts::SIMPLE_A_DIM
}

/// `y = f(X) + sigma eps` with `X ~ N(0, I_6)` and
/// `sigma^2 = noise_ratio * var f(X)`; includes a 1000-point held-out set.
pub fn gen_simple_a(n: usize, noise_ratio: f64, seed: u64) -> Result<SimSample> {
    let d = consts::SIMPLE_A_DIM;
    let sd = libm::sqrt(noise_ratio * SIMPLE_A_SIGNAL_VAR);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw_x = |m: usize, rng: &mut ChaCha8Rng| {
        let mut x = DMatrix::zeros(m, d);
        for i in 0..m {
            for j in 0..d {
                x[(i, j)] = normal(rng);
            }
        }
        x
    };
    let x = draw_x(n, &mut rng);
    let row = |m: &DMatrix<f64>, i: usize| -> Vec<f64> { m.row(i).iter().copied().collect() };
    let f = DVector::from_fn(n, |i, _| simple_a_f(&row(&x, i)));
    let y = DVector::from_fn(n, |i, _| f[i] + sd * normal(&mut rng));
    let hx = draw_x(SIMPLE_A_HELDOUT, &mut rng);
    let hf = DVector::from_fn(SIMPLE_A_HELDOUT, |i, _| simple_a_f(&row(&hx, i)));
    Ok(SimSample {
        data: Dataset::new(y, x.clone(), x)?,
        theta_true: None,
        h0: f,
        grad1_h0: DVector::from_element(n, f64::NAN),
        sigma: DVector::from_element(n, sd * sd),
        heldout: Some(Heldout { x: hx, f: hf }),
    })
}

/// Out-of-sample `R^2 = 1 - sum (fhat - f)^2 / sum (f - mean f)^2`.
pub fn heldout_r2(fhat: &DVector<f64>, f: &DVector<f64>) -> f64 {
    let m = f.mean();
    let den: f64 = f.iter().map(|v| (v - m) * (v - m)).sum();
    let num: f64 = fhat.iter().zip(f.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - num / den
}

/// First-stage network `a2' tanh(A1 (W, Z))` of the simple(b) design.
pub fn simple_b_first_stage(w: &[f64], z: [f64; 2]) -> f64 {
    let stride = SIMPLE_B_MAX_P + 2;
    (0..4)
        .map(|r| {
            let row = &consts::SIMPLE_B_A1[r * stride..(r + 1) * stride];
            let mut s = row[SIMPLE_B_MAX_P] * z[0] + row[SIMPLE_B_MAX_P + 1] * z[1];
            for (j, &wj) in w.iter().enumerate() {
                s += row[j] * wj;
            }
            consts::SIMPLE_B_A2[r] * libm::tanh(s)
        })
        .sum()
}

pub fn simple_b_a3(p: usize) -> &'static [f64] {
    &consts::SIMPLE_B_A3[..p]
}

/// Endogenous linear IV with a network first stage; target coefficient 1.
pub fn gen_simple_b(n: usize, p: usize, seed: u64) -> Result<SimSample> {
    if p == 0 || p > SIMPLE_B_MAX_P {
        return Err(Error::Invalid(alloc::format!("simple(b) supports 1 <= p <= {SIMPLE_B_MAX_P}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a3 = simple_b_a3(p);
    let mut y1 = DVector::zeros(n);
    let mut y2 = DMatrix::zeros(n, p + 1);
    let mut x = DMatrix::zeros(n, p + 2);
    let mut h0 = DVector::zeros(n);
    let mut w = alloc::vec![0.0; p];
    for i in 0..n {
        for wj in w.iter_mut() {
            *wj = normal(&mut rng);
        }
        let z = [normal(&mut rng), normal(&mut rng)];
        let u1 = normal(&mut rng);
        let u2 = 0.9 * u1 + libm::sqrt(1.0 - 0.81) * normal(&mut rng);
        let r2 = simple_b_first_stage(&w, z) + u1;
        let h = r2 + w.iter().zip(a3).map(|(a, b)| a * b).sum::<f64>();
        h0[i] = h;
        y1[i] = h + u2;
        y2[(i, 0)] = r2;
        for j in 0..p {
            y2[(i, 1 + j)] = w[j];
            x[(i, j)] = w[j];
        }
        x[(i, p)] = z[0];
        x[(i, p + 1)] = z[1];
    }
    Ok(SimSample {
        data: Dataset::new(y1, y2, x)?,
        theta_true: Some(1.0),
        h0,
        grad1_h0: DVector::from_element(n, 1.0),
        sigma: DVector::from_element(n, 1.0),
        heldout: None,
    })
}
