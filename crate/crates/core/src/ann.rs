//! Feedforward networks with a scalar affine output, hand-written backprop,
//! input tangents and Adam.
//!
//! Parameters live in one flat vector. Layer `l` with fan-in `i` and fan-out
//! `o` occupies `o * i` weights stored row-major by output unit (`W[o][i]` at
//! `o * i_dim + i`) followed by `o` biases. Activations are cached
//! sample-major so each unit's preactivation is a contiguous dot product.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + libm::exp(-z)),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
}

/// Named slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSegment {
    pub name: String,
    pub range: Range<usize>,
}

impl NetSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_widths,
            activation,
            output_dim: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Invalid("network input_dim must be positive".into()));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Invalid(
                "network needs at least one hidden layer of positive width".into(),
            ));
        }
        if self.output_dim != 1 {
            return Err(Error::Invalid("only scalar-output networks are supported".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine map, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| o * i + o).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::new();
        let mut acc = 0;
        for (i, o) in self.layer_shapes() {
            off.push(acc);
            acc += o * i + o;
        }
        off
    }

    /// One segment per weight matrix and bias vector, starting at `base`.
    pub fn segments(&self, base: usize, prefix: &str) -> Vec<ParamSegment> {
        let mut out = Vec::new();
        let mut acc = base;
        let shapes = self.layer_shapes();
        for (l, &(i, o)) in shapes.iter().enumerate() {
            out.push(ParamSegment {
                name: format!("{prefix}W{}", l + 1),
                range: acc..acc + o * i,
            });
            acc += o * i;
            out.push(ParamSegment {
                name: format!("{prefix}b{}", l + 1),
                range: acc..acc + o,
            });
            acc += o;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub values: Vec<f64>,
}

impl NetParams {
    pub fn zeros(spec: &NetSpec) -> Self {
        Self {
            values: vec![0.0; spec.num_params()],
        }
    }

    /// Uniform on `+-sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &NetSpec, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(spec.num_params());
        for (i, o) in spec.layer_shapes() {
            let bound = libm::sqrt(6.0 / (i + o) as f64);
            for _ in 0..o * i {
                values.push(rng.random_range(-bound..bound));
            }
            values.extend(core::iter::repeat_n(0.0, o));
        }
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Post-activation values of every hidden layer, sample-major.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    n: usize,
    hidden: Vec<Vec<f64>>,
    input: Vec<f64>,
}

fn check_shapes(spec: &NetSpec, params: &[f64], inputs: &DMatrix<f64>) -> Result<()> {
    check_len("network parameters", spec.num_params(), params.len())?;
    check_len("network input columns", spec.input_dim, inputs.ncols())?;
    check_finite("network parameters", params)
}

fn sample_major(inputs: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = inputs.shape();
    let mut out = vec![0.0; n * d];
    for j in 0..d {
        for s in 0..n {
            out[s * d + j] = inputs[(s, j)];
        }
    }
    out
}

/// Affine map on sample-major rows: `out[s][o] = b[o] + W[o] . a[s]`.
fn affine(w: &[f64], b: &[f64], a: &[f64], n: usize, fan_in: usize, out: &mut [f64]) {
    let fan_out = b.len();
    for s in 0..n {
        let row = &a[s * fan_in..(s + 1) * fan_in];
        for o in 0..fan_out {
            out[s * fan_out + o] = b[o] + dot(&w[o * fan_in..(o + 1) * fan_in], row);
        }
    }
}

/// Evaluates the network on every row of `inputs`.
pub fn forward_cached(
    spec: &NetSpec,
    params: &[f64],
    inputs: &DMatrix<f64>,
) -> Result<(DVector<f64>, ForwardCache)> {
    check_shapes(spec, params, inputs)?;
    let n = inputs.nrows();
    let shapes = spec.layer_shapes();
    let offsets = spec.offsets();
    let input = sample_major(inputs);
    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(shapes.len() - 1);
    let mut out = DVector::zeros(n);
    for (l, &(fi, fo)) in shapes.iter().enumerate() {
        let w = &params[offsets[l]..offsets[l] + fo * fi];
        let b = &params[offsets[l] + fo * fi..offsets[l] + fo * fi + fo];
        let prev: &[f64] = if l == 0 { &input } else { &hidden[l - 1] };
        let mut z = vec![0.0; n * fo];
        affine(w, b, prev, n, fi, &mut z);
        if l + 1 == shapes.len() {
            out.as_mut_slice().copy_from_slice(&z);
        } else {
            for v in z.iter_mut() {
                *v = spec.activation.apply(*v);
            }
            hidden.push(z);
        }
    }
    check_finite("network output", out.as_slice())?;
    Ok((out, ForwardCache { n, hidden, input }))
}

pub fn forward(spec: &NetSpec, params: &[f64], inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
    forward_cached(spec, params, inputs).map(|(y, _)| y)
}

/// Writes `sum_s upstream[s] * d h(input_s) / d params` into `grad`
/// (overwriting it).
pub fn grad_params_cached(
    spec: &NetSpec,
    params: &[f64],
    cache: &ForwardCache,
    upstream: &[f64],
    grad: &mut [f64],
) -> Result<()> {
    let n = cache.n;
    check_len("network upstream", n, upstream.len())?;
    check_len("network gradient buffer", params.len(), grad.len())?;
    check_finite("network upstream", upstream)?;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let shapes = spec.layer_shapes();
    let offsets = spec.offsets();
    let last = shapes.len() - 1;
    // delta holds dLoss/dz for the current layer, sample-major.
    let mut delta: Vec<f64> = upstream.to_vec();
    for l in (0..=last).rev() {
        let (fi, fo) = shapes[l];
        let woff = offsets[l];
        let boff = woff + fo * fi;
        let prev: &[f64] = if l == 0 { &cache.input } else { &cache.hidden[l - 1] };
        for s in 0..n {
            let a = &prev[s * fi..(s + 1) * fi];
            for o in 0..fo {
                let d = delta[s * fo + o];
                if d == 0.0 {
                    continue;
                }
                grad[boff + o] += d;
                let gw = &mut grad[woff + o * fi..woff + (o + 1) * fi];
                for (g, &ai) in gw.iter_mut().zip(a) {
                    *g += d * ai;
                }
            }
        }
        if l == 0 {
            break;
        }
        let w = &params[woff..woff + fo * fi];
        let mut next = vec![0.0; n * fi];
        for s in 0..n {
            let dn = &mut next[s * fi..(s + 1) * fi];
            for o in 0..fo {
                let d = delta[s * fo + o];
                if d == 0.0 {
                    continue;
                }
                for (x, &wv) in dn.iter_mut().zip(&w[o * fi..(o + 1) * fi]) {
                    *x += d * wv;
                }
            }
            for (x, &a) in dn.iter_mut().zip(&prev[s * fi..(s + 1) * fi]) {
                *x *= spec.activation.slope_from_output(a);
            }
        }
        delta = next;
    }
    check_finite("network gradient", grad)
}

pub fn grad_params(
    spec: &NetSpec,
    params: &[f64],
    inputs: &DMatrix<f64>,
    upstream: &DVector<f64>,
) -> Result<Vec<f64>> {
    let (_, cache) = forward_cached(spec, params, inputs)?;
    let mut g = vec![0.0; params.len()];
    grad_params_cached(spec, params, &cache, upstream.as_slice(), &mut g)?;
    Ok(g)
}

/// `d h / d input[col]` per row, by forward-mode tangent propagation.
pub fn grad_input(
    spec: &NetSpec,
    params: &[f64],
    inputs: &DMatrix<f64>,
    col: usize,
) -> Result<DVector<f64>> {
    let (_, cache) = forward_cached(spec, params, inputs)?;
    if col >= spec.input_dim {
        return Err(Error::Invalid(format!("input column {col} out of range")));
    }
    let n = cache.n;
    let shapes = spec.layer_shapes();
    let offsets = spec.offsets();
    // Tangent of the first preactivation is column `col` of W1.
    let (fi0, fo0) = shapes[0];
    let mut tangent = vec![0.0; n * fo0];
    for s in 0..n {
        for o in 0..fo0 {
            tangent[s * fo0 + o] = params[offsets[0] + o * fi0 + col];
        }
    }
    for l in 1..shapes.len() {
        let (fi, fo) = shapes[l];
        let h = &cache.hidden[l - 1];
        for (t, &a) in tangent.iter_mut().zip(h) {
            *t *= spec.activation.slope_from_output(a);
        }
        let w = &params[offsets[l]..offsets[l] + fo * fi];
        let zeros = vec![0.0; fo];
        let mut next = vec![0.0; n * fo];
        affine(w, &zeros, &tangent, n, fi, &mut next);
        tangent = next;
    }
    Ok(DVector::from_vec(tangent))
}

pub fn grad_input1(spec: &NetSpec, params: &[f64], inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
    grad_input(spec, params, inputs, 0)
}

/// A network together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub spec: NetSpec,
    pub params: NetParams,
}

impl NeuralNet {
    pub fn forward(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        forward(&self.spec, &self.params.values, inputs)
    }

    pub fn grad_input1(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        grad_input1(&self.spec, &self.params.values, inputs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    /// One bias-corrected Adam update. A non-finite gradient aborts before
    /// any state changes and names the offending segment.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], segments: &[ParamSegment]) -> Result<()> {
        check_len("adam parameters", self.m.len(), params.len())?;
        check_len("adam gradient", self.m.len(), grads.len())?;
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            let name = segments
                .iter()
                .find(|s| s.range.contains(&bad))
                .map_or_else(|| format!("parameter {bad}"), |s| s.name.clone());
            return Err(Error::NonFinite(format!("gradient in {name}")));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.lr * mh / (libm::sqrt(vh) + self.eps);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub min_steps: usize,
    pub max_steps: usize,
    pub window: usize,
    pub rel_tol: f64,
}

impl StoppingRule {
    pub fn new(min_steps: usize, max_steps: usize) -> Self {
        Self {
            min_steps,
            max_steps,
            window: 500,
            rel_tol: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_steps > self.max_steps || self.window == 0 {
            return Err(Error::Invalid(format!(
                "stopping rule needs min_steps <= max_steps and window >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Scales both step bounds by `1 / divisor` (at least one step each).
    pub fn shortened(&self, divisor: usize) -> Self {
        Self {
            min_steps: (self.min_steps / divisor).max(1),
            max_steps: (self.max_steps / divisor).max(1),
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Loss before every update, then the final loss.
    pub trace: Vec<f64>,
    pub steps: usize,
}

/// Full-batch Adam on `objective(params, grad) -> loss`.
///
/// Stops after `max_steps` updates, or once `min_steps` have been taken and
/// the loss improved by less than `rel_tol` (relative) over the last
/// `window` updates.
pub fn train<F>(
    params: &mut [f64],
    segments: &[ParamSegment],
    mut objective: F,
    rule: &StoppingRule,
    adam: &mut AdamState,
) -> Result<TrainReport>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    rule.validate()?;
    let mut grad = vec![0.0; params.len()];
    let mut trace = Vec::with_capacity(rule.max_steps + 1);
    let mut steps = 0;
    let diverged = |step: usize, reason: String, trace: &Vec<f64>| Error::Divergence {
        step,
        reason,
        trace: trace.clone(),
    };
    loop {
        let loss = match objective(params, &mut grad) {
            Ok(l) => l,
            Err(e) => return Err(diverged(steps, format!("{e}"), &trace)),
        };
        trace.push(loss);
        if !loss.is_finite() {
            return Err(diverged(steps, "non-finite loss".into(), &trace));
        }
        if steps >= rule.max_steps {
            break;
        }
        if steps >= rule.min_steps && trace.len() > rule.window {
            let past = trace[trace.len() - 1 - rule.window];
            let scale = past.abs().max(f64::MIN_POSITIVE);
            if (past - loss) / scale < rule.rel_tol {
                break;
            }
        }
        if let Err(e) = adam.step(params, &grad, segments) {
            return Err(diverged(steps, format!("{e}"), &trace));
        }
        steps += 1;
    }
    Ok(TrainReport { trace, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn zero_weights_pass_output_bias() {
        let spec = NetSpec::new(2, vec![4], Activation::Sigmoid).unwrap();
        let mut p = NetParams::zeros(&spec);
        *p.values.last_mut().unwrap() = 3.0;
        let y = forward(&spec, &p.values, &random_inputs(5, 2, 1)).unwrap();
        assert!(y.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn relu_negative_preactivations_leave_bias() {
        let spec = NetSpec::new(1, vec![3], Activation::Relu).unwrap();
        let mut p = NetParams::zeros(&spec);
        // W1 = 1, b1 = -10; inputs in (-1.5, 1.5) keep every unit dead.
        for k in 0..3 {
            p.values[k] = 1.0;
            p.values[3 + k] = -10.0;
            p.values[6 + k] = 2.0;
        }
        p.values[9] = -0.5;
        let y = forward(&spec, &p.values, &random_inputs(6, 1, 2)).unwrap();
        assert!(y.iter().all(|&v| v == -0.5));
    }

    #[test]
    fn tanh_layer_matches_dense_composition() {
        let spec = NetSpec::new(3, vec![4], Activation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = NetParams::init(&spec, &mut rng);
        for v in p.values.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        let x = random_inputs(3, 3, 4);
        let w1 = DMatrix::from_row_slice(4, 3, &p.values[0..12]);
        let b1 = DVector::from_column_slice(&p.values[12..16]);
        let w2 = DMatrix::from_row_slice(1, 4, &p.values[16..20]);
        let b2 = p.values[20];
        let y = forward(&spec, &p.values, &x).unwrap();
        for s in 0..3 {
            let z = &w1 * x.row(s).transpose() + &b1;
            let a = z.map(libm::tanh);
            let expect = (&w2 * a)[0] + b2;
            assert!((y[s] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let spec = NetSpec::new(2, vec![5, 5], Activation::Tanh).unwrap();
        let p = NetParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(5));
        let g = grad_params(&spec, &p.values, &random_inputs(4, 2, 6), &DVector::zeros(4)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_weight_gradient_is_hidden_activation() {
        let spec = NetSpec::new(1, vec![1], Activation::Sigmoid).unwrap();
        let p = vec![0.7, -0.2, 1.3, 0.1];
        let x = DMatrix::from_element(1, 1, 0.4);
        let g = grad_params(&spec, &p, &x, &DVector::from_element(1, 1.0)).unwrap();
        let hidden = 1.0 / (1.0 + libm::exp(-(0.7 * 0.4 - 0.2)));
        assert!((g[2] - hidden).abs() < 1e-15);
        assert_eq!(g[3], 1.0);
    }

    #[test]
    fn input_gradient_trivial_cases() {
        let spec = NetSpec::new(2, vec![3], Activation::Sigmoid).unwrap();
        let mut p = NetParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(7));
        for o in 0..3 {
            p.values[o * 2] = 0.0;
        }
        let g = grad_input1(&spec, &p.values, &random_inputs(5, 2, 8)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        // h(x) = 2 x1 + 5 through a ReLU unit that stays active.
        let spec = NetSpec::new(1, vec![1], Activation::Relu).unwrap();
        let p = vec![1.0, 10.0, 2.0, -15.0];
        let x = random_inputs(4, 1, 9);
        let y = forward(&spec, &p, &x).unwrap();
        let g = grad_input1(&spec, &p, &x).unwrap();
        for s in 0..4 {
            assert!((y[s] - (2.0 * x[(s, 0)] + 5.0)).abs() < 1e-12);
            assert_eq!(g[s], 2.0);
        }
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut adam = AdamState::new(3, 0.01);
        let mut p = vec![0.0, 1.0, -1.0];
        adam.step(&mut p, &[2.0, -0.5, 0.0], &[]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 1.01).abs() < 1e-9);
        assert_eq!(p[2], -1.0);
    }

    #[test]
    fn adam_two_steps_by_hand() {
        let mut adam = AdamState::new(1, 0.1);
        let mut p = vec![1.0];
        adam.step(&mut p, &[0.5], &[]).unwrap();
        adam.step(&mut p, &[-0.25], &[]).unwrap();
        let (b1, b2, eps, lr): (f64, f64, f64, f64) = (0.9, 0.999, 1e-8, 0.1);
        let m1 = (1.0 - b1) * 0.5;
        let v1 = (1.0 - b2) * 0.25;
        let x1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * -0.25;
        let v2 = b2 * v1 + (1.0 - b2) * 0.0625;
        let x2 = x1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((p[0] - x2).abs() < 1e-12);
    }

    #[test]
    fn adam_rejects_non_finite_gradient_naming_layer() {
        let spec = NetSpec::new(2, vec![3], Activation::Tanh).unwrap();
        let segs = spec.segments(0, "");
        let mut adam = AdamState::new(spec.num_params(), 0.01);
        let mut p = vec![0.0; spec.num_params()];
        let mut g = vec![0.0; spec.num_params()];
        g[7] = f64::NAN;
        let err = adam.step(&mut p, &g, &segs).unwrap_err();
        assert_eq!(err, Error::NonFinite("gradient in b1".into()));
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn train_quadratic_and_fixed_step_count() {
        let obj = |p: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (p[0] - 3.0);
            Ok((p[0] - 3.0) * (p[0] - 3.0))
        };
        let mut p = vec![0.0];
        let mut adam = AdamState::new(1, 0.01);
        let rule = StoppingRule::new(5000, 5000);
        let rep = train(&mut p, &[], obj, &rule, &mut adam).unwrap();
        assert!(*rep.trace.last().unwrap() <= 1e-6);

        let mut p = vec![0.0];
        let mut adam = AdamState::new(1, 0.01);
        let rep = train(&mut p, &[], obj, &StoppingRule::new(10, 10), &mut adam).unwrap();
        assert_eq!(rep.steps, 10);
        assert_eq!(adam.t, 10);
    }

    #[test]
    fn nan_loss_aborts_with_trace() {
        let mut calls = 0;
        let obj = |_: &[f64], g: &mut [f64]| {
            calls += 1;
            g[0] = 1.0;
            Ok(if calls > 3 { f64::NAN } else { 1.0 })
        };
        let mut p = vec![0.0];
        let mut adam = AdamState::new(1, 0.01);
        match train(&mut p, &[], obj, &StoppingRule::new(10, 10), &mut adam) {
            Err(Error::Divergence { step, trace, .. }) => {
                assert_eq!(step, 3);
                assert_eq!(trace.len(), 4);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
