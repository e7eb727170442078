//! Multilayer perceptron with optional LayerNorm on hidden layers and sparse
//! initialization. Parameters live in a single flat [`ParamVector`] so that
//! optimizer statistics (traces, moments) can be index-aligned with them.
//!
//! Layout, layer by layer: the `out x in` weight matrix in row-major order
//! (one row per unit), then `out` biases, then, for hidden layers with
//! LayerNorm, `out` gains followed by `out` shifts.

use std::ops::{Deref, DerefMut};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;
const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::LeakyRelu => "leaky_relu",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Shape and initialization settings of an MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Number of actions `A`.
    pub heads: usize,
    /// Atoms (or quantiles) per action `K`; 1 means a scalar q-head.
    pub atoms_per_action: usize,
    /// One flag per hidden layer.
    pub layer_norm: Vec<bool>,
    pub sparsity: f64,
    pub activation: Activation,
}

impl NetworkSpec {
    /// Spec with LayerNorm on every hidden layer, leaky-relu and 90% sparsity.
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, heads: usize, atoms_per_action: usize) -> Self {
        let layer_norm = vec![true; hidden_dims.len()];
        NetworkSpec {
            input_dim,
            hidden_dims,
            heads,
            atoms_per_action,
            layer_norm,
            sparsity: 0.9,
            activation: Activation::LeakyRelu,
        }
    }

    pub fn with_layer_norm(mut self, on: bool) -> Self {
        self.layer_norm = vec![on; self.hidden_dims.len()];
        self
    }

    pub fn with_sparsity(mut self, sparsity: f64) -> Self {
        self.sparsity = sparsity;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn output_dim(&self) -> usize {
        self.heads * self.atoms_per_action
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.heads == 0 || self.atoms_per_action == 0 {
            return Err(Error::Config(
                "input_dim, heads and atoms_per_action must be positive".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.layer_norm.len() != self.hidden_dims.len() {
            return Err(Error::Config(format!(
                "layer_norm has {} flags for {} hidden layers",
                self.layer_norm.len(),
                self.hidden_dims.len()
            )));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::Config(format!(
                "sparsity must lie in [0, 1), got {}",
                self.sparsity
            )));
        }
        Ok(())
    }

    fn layers(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        let mut offset = 0;
        let widths = self
            .hidden_dims
            .iter()
            .copied()
            .chain(std::iter::once(self.output_dim()));
        for (i, out) in widths.enumerate() {
            let hidden = i < self.hidden_dims.len();
            let norm = hidden && self.layer_norm[i];
            let shape = LayerShape {
                fan_in,
                out,
                offset,
                hidden,
                norm,
            };
            offset += shape.size();
            fan_in = out;
            shapes.push(shape);
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(LayerShape::size).sum()
    }

    /// Sparse fan-in initialization, deterministic in `seed`.
    ///
    /// Weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), then exactly
    /// `floor(sparsity * fan_in)` incoming weights of every unit are zeroed.
    /// Biases and LayerNorm shifts start at 0, gains at 1.
    pub fn init_sparse(&self, seed: u64) -> Result<ParamVector> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamVector::zeros(self.param_count());
        for layer in self.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let zeros = (self.sparsity * layer.fan_in as f64).floor() as usize;
            for unit in 0..layer.out {
                let row = &mut params[layer.row(unit)];
                for w in row.iter_mut() {
                    *w = rng.gen_range(-bound..bound);
                }
                for idx in sample(&mut rng, layer.fan_in, zeros) {
                    row[idx] = 0.0;
                }
            }
            if layer.norm {
                params[layer.gain()].fill(1.0);
            }
        }
        Ok(params)
    }

    /// Evaluates the network, keeping the intermediates needed by [`NetworkSpec::backward`].
    pub fn forward(&self, params: &ParamVector, obs: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let (out, cache) = self.run(params, obs, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    /// Network outputs without retaining a cache.
    pub fn evaluate(&self, params: &ParamVector, obs: &[f64]) -> Result<Vec<f64>> {
        self.run(params, obs, false).map(|(out, _)| out)
    }

    fn run(&self, params: &ParamVector, obs: &[f64], keep: bool) -> Result<(Vec<f64>, Option<ForwardCache>)> {
        self.check_params(params)?;
        if obs.len() != self.input_dim {
            return Err(Error::Usage(format!(
                "observation has length {}, network expects {}",
                obs.len(),
                self.input_dim
            )));
        }
        let layers = self.layers();
        let mut cache = keep.then(|| ForwardCache {
            fingerprint: fingerprint(params, obs),
            param_len: params.len(),
            layers: Vec::with_capacity(layers.len()),
        });
        let mut x = obs.to_vec();
        for (li, layer) in layers.iter().enumerate() {
            let w = &params[layer.weights()];
            let b = &params[layer.bias()];
            let mut pre: Vec<f64> = (0..layer.out)
                .map(|u| {
                    let row = &w[u * layer.fan_in..(u + 1) * layer.fan_in];
                    row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b[u]
                })
                .collect();
            let mut norm = None;
            if layer.norm {
                let n = layer.out as f64;
                let mean = pre.iter().sum::<f64>() / n;
                let var = pre.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
                let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                let xhat: Vec<f64> = pre.iter().map(|p| (p - mean) * inv_std).collect();
                let gain = &params[layer.gain()];
                let shift = &params[layer.shift()];
                let normed: Vec<f64> = xhat
                    .iter()
                    .zip(gain.iter().zip(shift))
                    .map(|(h, (g, s))| g * h + s)
                    .collect();
                norm = Some(NormCache { xhat, inv_std });
                pre = normed;
            }
            let out: Vec<f64> = if layer.hidden {
                pre.iter().map(|&p| self.activation.apply(p)).collect()
            } else {
                pre.clone()
            };
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric("forward pass layer", li));
            }
            match cache.as_mut() {
                Some(c) => c.layers.push(LayerCache {
                    input: std::mem::replace(&mut x, out.clone()),
                    act_input: pre,
                    output: out,
                    norm,
                }),
                None => x = out,
            }
        }
        Ok((x, cache))
    }

    /// Gradient of `output_grad . outputs` with respect to the parameters.
    pub fn backward(&self, params: &ParamVector, cache: &ForwardCache, output_grad: &[f64]) -> Result<ParamVector> {
        self.check_params(params)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::Usage(format!(
                "output gradient has length {}, network outputs {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        let layers = self.layers();
        if cache.param_len != params.len()
            || cache.layers.len() != layers.len()
            || cache.fingerprint != fingerprint(params, &cache.layers[0].input)
        {
            return Err(Error::Usage("forward cache does not belong to these parameters".into()));
        }
        let mut grad = ParamVector::zeros(params.len());
        let mut upstream = output_grad.to_vec();
        for (layer, lc) in layers.iter().zip(&cache.layers).rev() {
            // upstream holds d/d(output of this layer)
            let mut d_pre: Vec<f64> = if layer.hidden {
                upstream
                    .iter()
                    .zip(lc.act_input.iter().zip(&lc.output))
                    .map(|(g, (&x, &y))| g * self.activation.derivative(x, y))
                    .collect()
            } else {
                upstream
            };
            if let Some(norm) = &lc.norm {
                let gain = &params[layer.gain()];
                for (g, (d, h)) in grad[layer.gain()].iter_mut().zip(d_pre.iter().zip(&norm.xhat)) {
                    *g = d * h;
                }
                grad[layer.shift()].copy_from_slice(&d_pre);
                let dxhat: Vec<f64> = d_pre.iter().zip(gain).map(|(d, g)| d * g).collect();
                let n = layer.out as f64;
                let mean_d = dxhat.iter().sum::<f64>() / n;
                let mean_dx = dxhat.iter().zip(&norm.xhat).map(|(d, h)| d * h).sum::<f64>() / n;
                d_pre = dxhat
                    .iter()
                    .zip(&norm.xhat)
                    .map(|(d, h)| norm.inv_std * (d - mean_d - h * mean_dx))
                    .collect();
            }
            let w = &params[layer.weights()];
            {
                let gw = &mut grad[layer.weights()];
                for u in 0..layer.out {
                    let d = d_pre[u];
                    if d != 0.0 {
                        let row = &mut gw[u * layer.fan_in..(u + 1) * layer.fan_in];
                        for (g, x) in row.iter_mut().zip(&lc.input) {
                            *g = d * x;
                        }
                    }
                }
            }
            grad[layer.bias()].copy_from_slice(&d_pre);
            let mut below = vec![0.0; layer.fan_in];
            for u in 0..layer.out {
                let d = d_pre[u];
                if d != 0.0 {
                    let row = &w[u * layer.fan_in..(u + 1) * layer.fan_in];
                    for (b, wv) in below.iter_mut().zip(row) {
                        *b += d * wv;
                    }
                }
            }
            upstream = below;
        }
        if let Some(i) = grad.first_non_finite() {
            return Err(Error::numeric("backward pass parameter", i));
        }
        Ok(grad)
    }

    /// Rescales the last hidden layer so the parameter count is the largest
    /// value not exceeding `target_param_count`.
    pub fn matched_hidden_width(&self, target_param_count: usize) -> Result<NetworkSpec> {
        self.validate()?;
        let Some(&current) = self.hidden_dims.last() else {
            return Err(Error::Config(
                "capacity matching needs at least one hidden layer".into(),
            ));
        };
        let mut spec = self.clone();
        let last = spec.hidden_dims.len() - 1;
        spec.hidden_dims[last] = 1;
        let base = spec.param_count();
        if target_param_count < base {
            return Err(Error::Config(format!(
                "target of {target_param_count} parameters is below the minimum {base}"
            )));
        }
        spec.hidden_dims[last] = 2;
        let per_unit = spec.param_count() - base;
        spec.hidden_dims[last] = 1 + (target_param_count - base) / per_unit;
        debug_assert!(spec.param_count() <= target_param_count);
        debug_assert!(current > 0);
        Ok(spec)
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(Error::Usage(format!(
                "parameter vector has length {}, spec needs {expected}",
                params.len()
            )));
        }
        if let Some(i) = params.first_non_finite() {
            return Err(Error::numeric("parameter", i));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    fan_in: usize,
    out: usize,
    offset: usize,
    hidden: bool,
    norm: bool,
}

impl LayerShape {
    fn size(&self) -> usize {
        self.out * self.fan_in + self.out + if self.norm { 2 * self.out } else { 0 }
    }
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.out * self.fan_in
    }
    fn row(&self, unit: usize) -> std::ops::Range<usize> {
        let start = self.offset + unit * self.fan_in;
        start..start + self.fan_in
    }
    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.weights().end;
        start..start + self.out
    }
    fn gain(&self) -> std::ops::Range<usize> {
        let start = self.bias().end;
        start..start + self.out
    }
    fn shift(&self) -> std::ops::Range<usize> {
        let start = self.gain().end;
        start..start + self.out
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Vec<f64>,
    inv_std: f64,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Vec<f64>,
    /// Value fed into the activation (post-LayerNorm when enabled).
    act_input: Vec<f64>,
    output: Vec<f64>,
    norm: Option<NormCache>,
}

/// Intermediates of one forward pass; only valid for the exact
/// `(params, input)` pair that produced it.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    param_len: usize,
    layers: Vec<LayerCache>,
}

/// Index of the first NaN or infinite entry.
pub(crate) fn first_non_finite(values: &[f64]) -> Option<usize> {
    const EXP: u64 = 0x7ff0_0000_0000_0000;
    // branch-free scan first; locating the index is the rare path
    if !values.iter().fold(false, |bad, v| bad | (v.to_bits() & EXP == EXP)) {
        return None;
    }
    values.iter().position(|v| !v.is_finite())
}

fn fingerprint(params: &[f64], obs: &[f64]) -> u64 {
    // four independent lanes keep the multiply chain short
    let mut lanes: [u64; 4] = [
        0xcbf2_9ce4_8422_2325,
        0x9e37_79b9_7f4a_7c15,
        0x2545_f491_4f6c_dd1d,
        0x1405_7b7e_f767_814f,
    ];
    for (i, v) in params.iter().chain(obs).enumerate() {
        let h = &mut lanes[i & 3];
        *h = (*h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3).rotate_left(29);
    }
    lanes.iter().fold(params.len() as u64, |acc, h| {
        (acc ^ h).wrapping_mul(0x0100_0000_01b3).rotate_left(17)
    })
}

/// Flat vector of parameters or per-parameter statistics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        first_non_finite(&self.0)
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn fill_zero(&mut self) {
        self.0.fill(0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|v| *v *= factor);
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

/// Uniform random observation, used by tests and gradient checks.
pub fn random_input<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
}
