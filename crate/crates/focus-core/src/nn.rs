//! Minimal fully-connected network on f64 with analytic gradients.
//!
//! The only training objective the pipeline needs is a per-example-weighted,
//! per-dimension-scaled squared error over the network output, so the
//! gradient path is specialized to that family ([`SquaredErrorBatch`]):
//!
//! ```text
//! L = (1/N) * sum_i w_i * sum_d (c_d * (f(x_i)_d - t_i_d))^2
//! ```
//!
//! with constant `w_i` (example weights) and `c_d` (output scales). Plain
//! mean squared error is `w = 1, c = 1`; curriculum-weighted and
//! exponentially-discounted losses are particular choices of `w`.
//!
//! Layer-0 activations can be computed from a cached prefix over a constant
//! leading slice of the input (see [`MlpParams::layer0_prefix`]); because the
//! accumulation order is identical, the cached path is bit-exact with the
//! plain forward pass.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Softplus,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softplus, `ln(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Weights and biases of a fully-connected network.
///
/// `weights[l]` is the `layer_sizes[l+1] x layer_sizes[l]` matrix of layer
/// `l`, stored flat in row-major order; `biases[l]` has `layer_sizes[l+1]`
/// entries. Hidden layers share one activation, the last layer uses
/// [`OutputActivation`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    output_activation: OutputActivation,
}

/// Per-parameter gradient (or moment) tree, congruent with [`MlpParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn congruent_with(&self, params: &MlpParams) -> bool {
        self.weights.len() == params.weights.len()
            && self.biases.len() == params.biases.len()
            && self
                .weights
                .iter()
                .zip(&params.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&params.biases)
                .all(|(a, b)| a.len() == b.len())
    }
}

/// Uniform `U(-b, b)` initialization with `b = sqrt(6 / (fan_in + fan_out))`,
/// zero biases, drawn in row-major order from a ChaCha8 stream over `seed`.
pub fn mlp_init(
    layer_sizes: &[usize],
    activation: Activation,
    output_activation: OutputActivation,
    seed: u64,
) -> Result<MlpParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "mlp needs at least an input and an output layer, got {} sizes",
            layer_sizes.len()
        )));
    }
    if layer_sizes.iter().any(|&n| n == 0) {
        return Err(Error::Config("mlp layer sizes must all be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for l in 0..layer_sizes.len() - 1 {
        let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in * fan_out {
            w.push(rng.gen_range(-bound..bound));
        }
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpParams {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
        activation,
        output_activation,
    })
}

impl MlpParams {
    /// Rebuild parameters from raw parts (used by checkpoint loading).
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Checkpoint("invalid layer sizes".into()));
        }
        if weights.len() != layer_sizes.len() - 1 || biases.len() != layer_sizes.len() - 1 {
            return Err(Error::Checkpoint("layer count mismatch".into()));
        }
        for l in 0..weights.len() {
            if weights[l].len() != layer_sizes[l] * layer_sizes[l + 1] {
                return Err(Error::Checkpoint(format!("weight matrix {l} has wrong size")));
            }
            if biases[l].len() != layer_sizes[l + 1] {
                return Err(Error::Checkpoint(format!("bias vector {l} has wrong size")));
            }
        }
        Ok(MlpParams {
            layer_sizes,
            weights,
            biases,
            activation,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Set every bias of the final layer to `value`.
    ///
    /// Used at initialization to start the network's output near a known
    /// prior scale instead of the activation's default, which shortens the
    /// initial descent when targets live far from that default.
    pub fn set_output_bias(&mut self, value: f64) {
        for b in self.biases.last_mut().unwrap() {
            *b = value;
        }
    }

    fn hidden_act(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Subgradient convention: relu'(0) = 0.
    fn hidden_act_deriv(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    fn output_act(&self, z: f64) -> f64 {
        match self.output_activation {
            OutputActivation::Identity => z,
            OutputActivation::Softplus => softplus(z),
        }
    }

    fn output_act_deriv(&self, z: f64) -> f64 {
        match self.output_activation {
            OutputActivation::Identity => 1.0,
            OutputActivation::Softplus => sigmoid(z),
        }
    }

    /// Partial layer-0 pre-activations over the leading `prefix_len` inputs
    /// (no bias). Summation runs in index order starting from 0.0, so
    /// resuming from this prefix is bit-identical to a full forward pass.
    pub fn layer0_prefix(&self, leading_inputs: &[f64]) -> Result<Vec<f64>> {
        if leading_inputs.len() > self.layer_sizes[0] {
            return Err(Error::Shape {
                expected: self.layer_sizes[0],
                got: leading_inputs.len(),
                context: "layer0_prefix inputs".into(),
            });
        }
        let (n_in, n_out) = (self.layer_sizes[0], self.layer_sizes[1]);
        let w = &self.weights[0];
        let mut prefix = vec![0.0; n_out];
        for (o, acc) in prefix.iter_mut().enumerate() {
            let row = &w[o * n_in..o * n_in + leading_inputs.len()];
            for (wi, xi) in row.iter().zip(leading_inputs) {
                *acc += wi * xi;
            }
        }
        Ok(prefix)
    }

    /// Forward pass resuming layer 0 from `prefix` (as produced by
    /// [`Self::layer0_prefix`] over the first `prefix_len` inputs) and the
    /// remaining `rest` inputs.
    pub fn forward_with_prefix(&self, prefix: &[f64], prefix_len: usize, rest: &[f64]) -> Result<Vec<f64>> {
        if prefix_len + rest.len() != self.layer_sizes[0] {
            return Err(Error::Shape {
                expected: self.layer_sizes[0],
                got: prefix_len + rest.len(),
                context: "forward input".into(),
            });
        }
        if prefix.len() != self.layer_sizes[1] {
            return Err(Error::Shape {
                expected: self.layer_sizes[1],
                got: prefix.len(),
                context: "layer-0 prefix".into(),
            });
        }
        let n_in = self.layer_sizes[0];
        let n_out = self.layer_sizes[1];
        let w = &self.weights[0];
        let b = &self.biases[0];
        let mut a = vec![0.0; n_out];
        let last_layer = self.weights.len() - 1;
        for o in 0..n_out {
            let mut acc = prefix[o];
            let row = &w[o * n_in + prefix_len..(o + 1) * n_in];
            for (wi, xi) in row.iter().zip(rest) {
                acc += wi * xi;
            }
            acc += b[o];
            a[o] = if last_layer == 0 { self.output_act(acc) } else { self.hidden_act(acc) };
        }
        self.forward_upper_layers(a)
    }

    fn forward_upper_layers(&self, mut a: Vec<f64>) -> Result<Vec<f64>> {
        let last = self.weights.len() - 1;
        for l in 1..self.weights.len() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.weights[l];
            let b = &self.biases[l];
            let mut next = vec![0.0; n_out];
            for (o, out) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                let row = &w[o * n_in..(o + 1) * n_in];
                for (wi, xi) in row.iter().zip(&a) {
                    acc += wi * xi;
                }
                acc += b[o];
                *out = if l == last { self.output_act(acc) } else { self.hidden_act(acc) };
            }
            a = next;
        }
        Ok(a)
    }
}

/// Plain forward pass.
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    let prefix = vec![0.0; params.layer_sizes[1]];
    params.forward_with_prefix(&prefix, 0, input)
}

/// A weighted squared-error objective over a batch.
///
/// `example_weights` and `output_scales` are constants under
/// differentiation; `None` means all ones.
#[derive(Debug, Clone, Copy)]
pub struct SquaredErrorBatch<'a> {
    pub inputs: &'a [Vec<f64>],
    pub targets: &'a [Vec<f64>],
    pub example_weights: Option<&'a [f64]>,
    pub output_scales: Option<&'a [f64]>,
}

impl<'a> SquaredErrorBatch<'a> {
    fn validate(&self, params: &MlpParams) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        if self.inputs.len() != self.targets.len() {
            return Err(Error::Shape {
                expected: self.inputs.len(),
                got: self.targets.len(),
                context: "batch targets".into(),
            });
        }
        if let Some(w) = self.example_weights {
            if w.len() != self.inputs.len() {
                return Err(Error::Shape {
                    expected: self.inputs.len(),
                    got: w.len(),
                    context: "example weights".into(),
                });
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric("non-finite example weight".into()));
            }
        }
        if let Some(c) = self.output_scales {
            if c.len() != params.output_dim() {
                return Err(Error::Shape {
                    expected: params.output_dim(),
                    got: c.len(),
                    context: "output scales".into(),
                });
            }
        }
        for (i, x) in self.inputs.iter().enumerate() {
            if x.len() != params.input_dim() {
                return Err(Error::Shape {
                    expected: params.input_dim(),
                    got: x.len(),
                    context: format!("input {i}"),
                });
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.len() != params.output_dim() {
                return Err(Error::Shape {
                    expected: params.output_dim(),
                    got: t.len(),
                    context: format!("target {i}"),
                });
            }
        }
        Ok(())
    }

    fn weight(&self, i: usize) -> f64 {
        self.example_weights.map_or(1.0, |w| w[i])
    }

    fn scale(&self, d: usize) -> f64 {
        self.output_scales.map_or(1.0, |c| c[d])
    }
}

/// Batch loss via forward evaluation only (no gradients). This is the path
/// the finite-difference oracle probes.
pub fn batch_loss(params: &MlpParams, batch: &SquaredErrorBatch) -> Result<f64> {
    batch.validate(params)?;
    let n = batch.inputs.len() as f64;
    let mut total = 0.0;
    for (i, (x, t)) in batch.inputs.iter().zip(batch.targets).enumerate() {
        let y = mlp_forward(params, x)?;
        let mut err = 0.0;
        for d in 0..y.len() {
            let e = batch.scale(d) * (y[d] - t[d]);
            err += e * e;
        }
        total += batch.weight(i) * err;
    }
    Ok(total / n)
}

struct Trace {
    // pre-activations and activations per layer; activations[0] is the input
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
}

fn forward_trace(params: &MlpParams, input: &[f64]) -> Result<Trace> {
    let depth = params.weights.len();
    let mut pre = Vec::with_capacity(depth);
    let mut act = Vec::with_capacity(depth + 1);
    act.push(input.to_vec());
    for l in 0..depth {
        let (n_in, n_out) = (params.layer_sizes[l], params.layer_sizes[l + 1]);
        let w = &params.weights[l];
        let b = &params.biases[l];
        let x = &act[l];
        let mut z = vec![0.0; n_out];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut acc = 0.0;
            let row = &w[o * n_in..(o + 1) * n_in];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *zo = acc + b[o];
        }
        let a: Vec<f64> = if l == depth - 1 {
            z.iter().map(|&v| params.output_act(v)).collect()
        } else {
            z.iter().map(|&v| params.hidden_act(v)).collect()
        };
        pre.push(z);
        act.push(a);
    }
    Ok(Trace { pre, act })
}

/// Loss and analytic gradient of a [`SquaredErrorBatch`].
///
/// Fails with a layer-indexed numeric error if any intermediate value goes
/// non-finite.
pub fn loss_and_grad(params: &MlpParams, batch: &SquaredErrorBatch) -> Result<(f64, Gradients)> {
    batch.validate(params)?;
    let depth = params.weights.len();
    let n = batch.inputs.len() as f64;
    let mut grads = Gradients::zeros_like(params);
    let mut total = 0.0;

    for (i, (x, t)) in batch.inputs.iter().zip(batch.targets).enumerate() {
        let trace = forward_trace(params, x)?;
        for (l, z) in trace.pre.iter().enumerate() {
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite pre-activation in layer {l}"
                )));
            }
        }
        let y = &trace.act[depth];
        let w_i = batch.weight(i);

        // Output delta: dL/dz_last.
        let mut delta: Vec<f64> = (0..y.len())
            .map(|d| {
                let c = batch.scale(d);
                let e = c * (y[d] - t[d]);
                total += w_i * e * e / n;
                2.0 / n * w_i * c * c * (y[d] - t[d]) * params.output_act_deriv(trace.pre[depth - 1][d])
            })
            .collect();

        for l in (0..depth).rev() {
            let (n_in, n_out) = (params.layer_sizes[l], params.layer_sizes[l + 1]);
            let a_prev = &trace.act[l];
            let gw = &mut grads.weights[l];
            for o in 0..n_out {
                let d_o = delta[o];
                grads.biases[l][o] += d_o;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(a_prev) {
                    *g += d_o * xi;
                }
            }
            if l > 0 {
                let w = &params.weights[l];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d_o = delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += d_o * wi;
                    }
                }
                for (p, z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                    *p *= params.hidden_act_deriv(*z);
                }
                delta = prev;
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok((total, grads))
}

/// Central-difference gradient of an arbitrary scalar function of the
/// parameters. Test oracle: touches only forward evaluation, never the
/// analytic backward path.
pub fn finite_diff_grad<F>(params: &MlpParams, loss_fn: F, eps: f64) -> Result<Gradients>
where
    F: Fn(&MlpParams) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Config("finite-difference eps must be > 0".into()));
    }
    let mut grads = Gradients::zeros_like(params);
    let mut probe = params.clone();
    for l in 0..params.weights.len() {
        for k in 0..params.weights[l].len() {
            let orig = probe.weights[l][k];
            probe.weights[l][k] = orig + eps;
            let up = loss_fn(&probe)?;
            probe.weights[l][k] = orig - eps;
            let down = loss_fn(&probe)?;
            probe.weights[l][k] = orig;
            grads.weights[l][k] = (up - down) / (2.0 * eps);
        }
        for k in 0..params.biases[l].len() {
            let orig = probe.biases[l][k];
            probe.biases[l][k] = orig + eps;
            let up = loss_fn(&probe)?;
            probe.biases[l][k] = orig - eps;
            let down = loss_fn(&probe)?;
            probe.biases[l][k] = orig;
            grads.biases[l][k] = (up - down) / (2.0 * eps);
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptAlgo {
    Sgd,
    Adam,
}

/// Optimizer configuration plus accumulated state (step count, moments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub algo: OptAlgo,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub m: Option<Gradients>,
    pub v: Option<Gradients>,
}

impl OptState {
    pub fn sgd(lr: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        Ok(OptState {
            algo: OptAlgo::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
            step_count: 0,
            m: None,
            v: None,
        })
    }

    pub fn adam(lr: f64, params: &MlpParams) -> Result<Self> {
        Self::adam_with(lr, 0.9, 0.999, 1e-8, params)
    }

    pub fn adam_with(lr: f64, beta1: f64, beta2: f64, epsilon: f64, params: &MlpParams) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(OptState {
            algo: OptAlgo::Adam,
            lr,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            m: Some(Gradients::zeros_like(params)),
            v: Some(Gradients::zeros_like(params)),
        })
    }
}

/// One optimizer update. Pure: consumes and returns the parameter and state
/// trees; two calls with equal inputs produce bit-identical outputs.
pub fn optimizer_step(
    mut params: MlpParams,
    grads: &Gradients,
    mut state: OptState,
) -> Result<(MlpParams, OptState)> {
    if !grads.congruent_with(&params) {
        return Err(Error::Config("gradient tree not congruent with params".into()));
    }
    match state.algo {
        OptAlgo::Sgd => {
            for (w, g) in params.weights.iter_mut().zip(&grads.weights) {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= state.lr * gi;
                }
            }
            for (b, g) in params.biases.iter_mut().zip(&grads.biases) {
                for (bi, gi) in b.iter_mut().zip(g) {
                    *bi -= state.lr * gi;
                }
            }
        }
        OptAlgo::Adam => {
            let (lr, beta1, beta2, epsilon) = (state.lr, state.beta1, state.beta2, state.epsilon);
            let m = state.m.as_mut().ok_or_else(|| Error::Config("adam state missing first moment".into()))?;
            let v = state.v.as_mut().ok_or_else(|| Error::Config("adam state missing second moment".into()))?;
            if !m.congruent_with(&params) || !v.congruent_with(&params) {
                return Err(Error::Config("adam moments not congruent with params".into()));
            }
            let t = (state.step_count + 1) as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for k in 0..theta.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    theta[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            };
            for l in 0..params.weights.len() {
                update(&mut params.weights[l], &grads.weights[l], &mut m.weights[l], &mut v.weights[l]);
                update(&mut params.biases[l], &grads.biases[l], &mut m.biases[l], &mut v.biases[l]);
            }
        }
    }
    state.step_count += 1;
    Ok((params, state))
}

/// Replace the raw parameter vectors (used when loading checkpoints into an
/// existing architecture description).
pub fn params_mut_for_test(params: &mut MlpParams) -> (&mut Vec<Vec<f64>>, &mut Vec<Vec<f64>>) {
    (&mut params.weights, &mut params.biases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_batch() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let inputs = vec![vec![0.3, -0.4], vec![-1.1, 0.9], vec![0.0, 2.0]];
        let targets = vec![vec![0.5], vec![-0.25], vec![1.0]];
        (inputs, targets)
    }

    #[test]
    fn init_is_seeded_bounded_and_zero_biased() {
        let a = mlp_init(&[3, 5, 2], Activation::Relu, OutputActivation::Identity, 42).unwrap();
        let b = mlp_init(&[3, 5, 2], Activation::Relu, OutputActivation::Identity, 42).unwrap();
        let c = mlp_init(&[3, 5, 2], Activation::Relu, OutputActivation::Identity, 43).unwrap();
        assert_eq!(a, b, "same seed must give bit-identical parameters");
        assert_ne!(a, c, "different seeds should give different parameters");
        let bound0 = (6.0 / 8.0f64).sqrt();
        assert!(a.weights()[0].iter().all(|w| w.abs() <= bound0));
        let bound1 = (6.0 / 7.0f64).sqrt();
        assert!(a.weights()[1].iter().all(|w| w.abs() <= bound1));
        assert!(a.biases().iter().flatten().all(|&b| b == 0.0));
    }

    #[test]
    fn init_rejects_degenerate_shapes() {
        assert!(mlp_init(&[4], Activation::Relu, OutputActivation::Identity, 0).is_err());
        assert!(mlp_init(&[4, 0, 2], Activation::Relu, OutputActivation::Identity, 0).is_err());
    }

    #[test]
    fn forward_checks_input_dim() {
        let p = mlp_init(&[3, 4, 2], Activation::Tanh, OutputActivation::Identity, 1).unwrap();
        assert!(mlp_forward(&p, &[1.0, 2.0]).is_err());
        assert_eq!(mlp_forward(&p, &[1.0, 2.0, 3.0]).unwrap().len(), 2);
    }

    #[test]
    fn zero_params_identity_output_gives_zero_loss_and_zero_last_layer_grads() {
        // All-zero parameters: forward(x) = 0, so ||forward(x)||^2 = 0 and the
        // gradient w.r.t. the last layer's weights vanishes (delta * a = 0
        // because the incoming activation is relu(0) = 0).
        let mut p = mlp_init(&[2, 3, 1], Activation::Relu, OutputActivation::Identity, 7).unwrap();
        {
            let (w, b) = params_mut_for_test(&mut p);
            for layer in w.iter_mut() {
                layer.iter_mut().for_each(|v| *v = 0.0);
            }
            for layer in b.iter_mut() {
                layer.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let inputs = vec![vec![0.7, -0.2]];
        let targets = vec![vec![0.0]];
        let batch = SquaredErrorBatch {
            inputs: &inputs,
            targets: &targets,
            example_weights: None,
            output_scales: None,
        };
        let (loss, grads) = loss_and_grad(&p, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.weights[1].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        // w0 = 0, b0 = 0 makes every first-layer pre-activation exactly 0;
        // with relu'(0) = 0 nothing flows back into layer 0.
        let mut p = mlp_init(&[1, 1, 1], Activation::Relu, OutputActivation::Identity, 3).unwrap();
        {
            let (w, b) = params_mut_for_test(&mut p);
            w[0][0] = 0.0;
            b[0][0] = 0.0;
            w[1][0] = 2.0;
            b[1][0] = 0.5;
        }
        let inputs = vec![vec![1.3]];
        let targets = vec![vec![0.0]];
        let batch = SquaredErrorBatch {
            inputs: &inputs,
            targets: &targets,
            example_weights: None,
            output_scales: None,
        };
        let (_, grads) = loss_and_grad(&p, &batch).unwrap();
        assert_eq!(grads.weights[0][0], 0.0);
        assert_eq!(grads.biases[0][0], 0.0);
    }

    #[test]
    fn softplus_head_is_strictly_positive_and_matches_ln2_at_zero() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let p = mlp_init(&[2, 4, 1], Activation::Tanh, OutputActivation::Softplus, 11).unwrap();
        for s in 0..50 {
            let x = [(s as f64) * 0.1 - 2.5, -(s as f64) * 0.07 + 1.0];
            let y = mlp_forward(&p, &x).unwrap();
            assert!(y[0] > 0.0, "softplus output must be strictly positive, got {}", y[0]);
        }
    }

    #[test]
    fn sgd_step_is_exactly_lr_times_grad() {
        let p = mlp_init(&[2, 2, 1], Activation::Relu, OutputActivation::Identity, 5).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.weights[0][0] = 2.0;
        g.biases[1][0] = -1.5;
        let state = OptState::sgd(0.1).unwrap();
        let before = p.clone();
        let (after, state) = optimizer_step(p, &g, state).unwrap();
        assert_eq!(state.step_count, 1);
        assert!((after.weights()[0][0] - (before.weights()[0][0] - 0.2)).abs() < 1e-16);
        assert!((after.biases()[1][0] - (before.biases()[1][0] + 0.15)).abs() < 1e-16);
        assert_eq!(after.weights()[0][1], before.weights()[0][1]);
    }

    #[test]
    fn adam_first_step_has_unit_normalized_update() {
        // With g = 1 on every coordinate, the bias-corrected first step is
        // -lr * 1 / (1 + eps) regardless of the betas.
        let lr = 1e-3;
        let p = mlp_init(&[1, 1], Activation::Relu, OutputActivation::Identity, 9).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.weights[0][0] = 1.0;
        g.biases[0][0] = 1.0;
        let state = OptState::adam(lr, &p).unwrap();
        let before = p.clone();
        let (after, _) = optimizer_step(p, &g, state).unwrap();
        let expected = lr * 1.0 / (1.0 + 1e-8);
        let dw = before.weights()[0][0] - after.weights()[0][0];
        let db = before.biases()[0][0] - after.biases()[0][0];
        assert!((dw - expected).abs() < 1e-15, "dw = {dw}, expected {expected}");
        assert!((db - expected).abs() < 1e-15);
    }

    #[test]
    fn optimizer_step_is_deterministic() {
        let p = mlp_init(&[2, 3, 1], Activation::Relu, OutputActivation::Identity, 21).unwrap();
        let (inputs, targets) = tiny_batch();
        let batch = SquaredErrorBatch {
            inputs: &inputs,
            targets: &targets,
            example_weights: None,
            output_scales: None,
        };
        let run = || {
            let mut params = p.clone();
            let mut state = OptState::adam(1e-2, &params).unwrap();
            for _ in 0..10 {
                let (_, g) = loss_and_grad(&params, &batch).unwrap();
                let out = optimizer_step(params, &g, state).unwrap();
                params = out.0;
                state = out.1;
            }
            params
        };
        assert_eq!(run(), run(), "ten identical optimizer steps must be bit-identical");
    }

    #[test]
    fn optimizer_rejects_bad_lr_and_mismatched_shapes() {
        assert!(OptState::sgd(0.0).is_err());
        assert!(OptState::sgd(-1.0).is_err());
        let p = mlp_init(&[2, 2, 1], Activation::Relu, OutputActivation::Identity, 2).unwrap();
        let other = mlp_init(&[3, 2, 1], Activation::Relu, OutputActivation::Identity, 2).unwrap();
        let g = Gradients::zeros_like(&other);
        let state = OptState::sgd(0.1).unwrap();
        assert!(optimizer_step(p, &g, state).is_err());
    }

    #[test]
    fn weighted_loss_scales_linearly_in_example_weights() {
        let p = mlp_init(&[2, 4, 1], Activation::Tanh, OutputActivation::Identity, 31).unwrap();
        let (inputs, targets) = tiny_batch();
        let ones = SquaredErrorBatch {
            inputs: &inputs,
            targets: &targets,
            example_weights: None,
            output_scales: None,
        };
        let weights = vec![2.0, 2.0, 2.0];
        let doubled = SquaredErrorBatch {
            example_weights: Some(&weights),
            ..ones
        };
        let l1 = batch_loss(&p, &ones).unwrap();
        let l2 = batch_loss(&p, &doubled).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn prefix_forward_is_bit_exact_with_plain_forward() {
        let p = mlp_init(&[6, 5, 3], Activation::Relu, OutputActivation::Softplus, 17).unwrap();
        let x = [0.2, -1.0, 0.5, 3.0, -0.25, 0.125];
        let plain = mlp_forward(&p, &x).unwrap();
        let prefix = p.layer0_prefix(&x[..4]).unwrap();
        let resumed = p.forward_with_prefix(&prefix, 4, &x[4..]).unwrap();
        assert_eq!(plain, resumed, "prefix-resumed forward must match bitwise");
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let p = mlp_init(&[3, 6, 4, 2], Activation::Tanh, OutputActivation::Softplus, 77).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(78);
        let inputs: Vec<Vec<f64>> =
            (0..5).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<Vec<f64>> =
            (0..5).map(|_| (0..2).map(|_| rng.gen_range(0.1..2.0)).collect()).collect();
        let weights: Vec<f64> = (0..5).map(|_| rng.gen_range(0.1..2.0)).collect();
        let scales = vec![1.3, 0.4];
        let batch = SquaredErrorBatch {
            inputs: &inputs,
            targets: &targets,
            example_weights: Some(&weights),
            output_scales: Some(&scales),
        };
        let (_, analytic) = loss_and_grad(&p, &batch).unwrap();
        let numeric = finite_diff_grad(&p, |q| batch_loss(q, &batch), 1e-5).unwrap();
        for l in 0..analytic.weights.len() {
            for (a, n) in analytic.weights[l].iter().zip(&numeric.weights[l]) {
                let denom = a.abs().max(n.abs()).max(1e-8);
                assert!(
                    ((a - n) / denom).abs() < 1e-6,
                    "weight grad mismatch in layer {l}: {a} vs {n}"
                );
            }
            for (a, n) in analytic.biases[l].iter().zip(&numeric.biases[l]) {
                let denom = a.abs().max(n.abs()).max(1e-8);
                assert!(
                    ((a - n) / denom).abs() < 1e-6,
                    "bias grad mismatch in layer {l}: {a} vs {n}"
                );
            }
        }
    }

    #[test]
    fn loss_reports_layer_of_numeric_blowup() {
        let mut p = mlp_init(&[1, 1, 1], Activation::Relu, OutputActivation::Identity, 1).unwrap();
        {
            let (w, _) = params_mut_for_test(&mut p);
            w[0][0] = f64::MAX;
            w[1][0] = f64::MAX;
        }
        let inputs = vec![vec![f64::MAX]];
        let targets = vec![vec![0.0]];
        let batch = SquaredErrorBatch {
            inputs: &inputs,
            targets: &targets,
            example_weights: None,
            output_scales: None,
        };
        let err = loss_and_grad(&p, &batch).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 0"), "expected layer index in: {msg}");
    }
}
