//! Dense numeric core: feed-forward MLPs over flat `f64` parameter vectors,
//! exact analytic gradients, Xavier initialization, and Adam.
//!
//! Parameters live in a single flat vector so hypernetworks can emit them
//! directly and optimizers can treat every model the same way. The layout is
//! a pure function of the spec: for each layer, a row-major `(out, in)`
//! weight matrix followed by the bias vector.
//!
//! Conventions: arithmetic is 64-bit throughout, the output layer is linear,
//! `ReLU'(0) = 0` and `ELU'(0) = 1`.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp() - 1.0
                }
            }
        }
    }

    /// Derivative at pre-activation `z`, with the fixed tie-break at 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if z >= 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
        }
    }
}

/// Layer sizes and activation of a feed-forward MLP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, activation: Activation) -> Result<Self> {
        let spec = Self { input_dim, hidden, output_dim, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("mlp dims must be >= 1".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Config("mlp needs at least one hidden layer".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, output layer included.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Total length of the flat parameter vector.
    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
    }

    /// Size of the widest activation buffer needed during evaluation.
    fn max_width(&self) -> usize {
        self.hidden
            .iter()
            .copied()
            .chain([self.input_dim, self.output_dim])
            .max()
            .unwrap()
    }
}

/// Flat parameter vector for an [`MlpSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub flat: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self { flat: vec![0.0; spec.param_count()] }
    }

    pub fn from_flat(spec: &MlpSpec, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::Config(format!(
                "parameter vector length {} does not match spec ({} expected)",
                flat.len(),
                spec.param_count()
            )));
        }
        Ok(Self { flat })
    }

    fn check(&self, spec: &MlpSpec) -> Result<()> {
        if self.flat.len() != spec.param_count() {
            return Err(Error::Config(format!(
                "parameter vector length {} does not match spec ({} expected)",
                self.flat.len(),
                spec.param_count()
            )));
        }
        Ok(())
    }
}

/// Xavier-uniform weights, zero biases. Deterministic given the generator.
pub fn xavier_init<R: Rng>(spec: &MlpSpec, rng: &mut R) -> MlpParams {
    let mut flat = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            flat.push(rng.gen_range(-bound..bound));
        }
        flat.extend(std::iter::repeat(0.0).take(fan_out));
    }
    MlpParams { flat }
}

#[inline]
fn affine(weights: &[f64], bias: &[f64], input: &[f64], out: &mut Vec<f64>) {
    let fan_in = input.len();
    out.clear();
    for (row, b) in bias.iter().enumerate() {
        let w = &weights[row * fan_in..(row + 1) * fan_in];
        // four independent accumulators break the loop-carried dependency of
        // a plain dot product; summation order is fixed, so results stay
        // bit-reproducible across runs
        let mut acc = [0.0f64; 4];
        let chunks = fan_in / 4;
        for c in 0..chunks {
            let i = 4 * c;
            acc[0] += w[i] * input[i];
            acc[1] += w[i + 1] * input[i + 1];
            acc[2] += w[i + 2] * input[i + 2];
            acc[3] += w[i + 3] * input[i + 3];
        }
        let mut tail = *b + (acc[0] + acc[2]) + (acc[1] + acc[3]);
        for i in 4 * chunks..fan_in {
            tail += w[i] * input[i];
        }
        out.push(tail);
    }
}

/// Evaluate the network. Pure and deterministic.
pub fn mlp_forward(params: &MlpParams, spec: &MlpSpec, x: &[f64]) -> Result<Vec<f64>> {
    params.check(spec)?;
    if x.len() != spec.input_dim {
        return Err(Error::Config(format!(
            "input length {} does not match spec input_dim {}",
            x.len(),
            spec.input_dim
        )));
    }
    let dims = n_layers_dims(spec);
    let mut cur = x.to_vec();
    let mut next = Vec::with_capacity(spec.max_width());
    let mut offset = 0;
    let last = dims.len() - 1;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let w_end = offset + fan_in * fan_out;
        let b_end = w_end + fan_out;
        affine(&params.flat[offset..w_end], &params.flat[w_end..b_end], &cur, &mut next);
        if l != last {
            for z in next.iter_mut() {
                *z = spec.activation.apply(*z);
            }
        }
        std::mem::swap(&mut cur, &mut next);
        offset = b_end;
    }
    Ok(cur)
}

#[inline]
fn n_layers_dims(spec: &MlpSpec) -> Vec<(usize, usize)> {
    spec.layer_dims()
}

/// Forward pass that keeps per-layer pre-activations and activations for backprop.
struct ForwardCache {
    /// `acts[0]` is the input; `acts[l+1]` is the activated output of layer `l`
    /// (linear for the output layer).
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

fn forward_cached(params: &MlpParams, spec: &MlpSpec, x: &[f64]) -> ForwardCache {
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let mut acts = Vec::with_capacity(dims.len() + 1);
    let mut pre = Vec::with_capacity(dims.len());
    acts.push(x.to_vec());
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let w_end = offset + fan_in * fan_out;
        let b_end = w_end + fan_out;
        let mut z = Vec::new();
        affine(&params.flat[offset..w_end], &params.flat[w_end..b_end], &acts[l], &mut z);
        let a = if l != last {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
        acts.push(a);
        offset = b_end;
    }
    ForwardCache { acts, pre }
}

/// Exact gradients of `upstream . f(x)` with respect to the parameters and to `x`.
pub fn mlp_grad(
    params: &MlpParams,
    spec: &MlpSpec,
    x: &[f64],
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut grad = vec![0.0; params.flat.len()];
    let grad_x = mlp_grad_accumulate(params, spec, x, upstream, &mut grad)?;
    Ok((grad, grad_x))
}

/// Like [`mlp_grad`] but adds the parameter gradient into `grad_params`,
/// so batched losses can share one accumulator.
pub fn mlp_grad_accumulate(
    params: &MlpParams,
    spec: &MlpSpec,
    x: &[f64],
    upstream: &[f64],
    grad_params: &mut [f64],
) -> Result<Vec<f64>> {
    params.check(spec)?;
    if x.len() != spec.input_dim {
        return Err(Error::Config(format!(
            "input length {} does not match spec input_dim {}",
            x.len(),
            spec.input_dim
        )));
    }
    if upstream.len() != spec.output_dim {
        return Err(Error::Config(format!(
            "upstream length {} does not match spec output_dim {}",
            upstream.len(),
            spec.output_dim
        )));
    }
    if grad_params.len() != params.flat.len() {
        return Err(Error::Config("gradient accumulator length mismatch".into()));
    }

    let cache = forward_cached(params, spec, x);
    let dims = spec.layer_dims();
    let last = dims.len() - 1;

    // Offsets of each layer's weight block in the flat vector.
    let mut offsets = Vec::with_capacity(dims.len());
    let mut off = 0;
    for &(fan_in, fan_out) in &dims {
        offsets.push(off);
        off += fan_in * fan_out + fan_out;
    }

    let mut delta = upstream.to_vec();
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        if l != last {
            for (d, z) in delta.iter_mut().zip(&cache.pre[l]) {
                *d *= spec.activation.derivative(*z);
            }
        }
        let w_off = offsets[l];
        let b_off = w_off + fan_in * fan_out;
        let input = &cache.acts[l];
        // dL/dW[row][col] = delta[row] * input[col]; dL/db[row] = delta[row]
        for row in 0..fan_out {
            let d = delta[row];
            let g = &mut grad_params[w_off + row * fan_in..w_off + (row + 1) * fan_in];
            for (gi, xi) in g.iter_mut().zip(input) {
                *gi += d * xi;
            }
            grad_params[b_off + row] += d;
        }
        // delta for the previous layer: W^T delta
        let mut prev = vec![0.0; fan_in];
        for row in 0..fan_out {
            let d = delta[row];
            let w = &params.flat[w_off + row * fan_in..w_off + (row + 1) * fan_in];
            for (p, wi) in prev.iter_mut().zip(w) {
                *p += d * wi;
            }
        }
        delta = prev;
    }
    Ok(delta)
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Config("adam length mismatch".into()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged("NaN or infinite gradient in adam step".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = &mut self.first_moment[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            let v = &mut self.second_moment[i];
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
