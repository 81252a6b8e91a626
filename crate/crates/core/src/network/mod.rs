//! From-scratch dense network core: forward pass with cached activations,
//! exact manual back-propagation, inverted dropout, Glorot initialization,
//! and the Adam optimizer.
//!
//! Everything is 64-bit; the central property is that analytic gradients
//! match central finite differences to better than 1e-5 relative error.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Softmax,
}

/// One affine layer with its activation, weights stored row-major
/// (`out_dim × in_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.bias[o];
            out.push(z);
        }
    }
}

/// An ordered stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::InvalidConfig(format!(
                    "layer dimensions do not chain: {} out vs {} in",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} parameter shapes are inconsistent"
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(())
    }

    /// All parameters flattened in declared order (per layer: weights, bias).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Overwrite all parameters from a flat vector in declared order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                context: "set_flat",
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let wn = l.weights.len();
            l.weights.copy_from_slice(&flat[offset..offset + wn]);
            offset += wn;
            let bn = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + bn]);
            offset += bn;
        }
        Ok(())
    }
}

/// Glorot-uniform initialization: weights in
/// `±sqrt(6/(fan_in+fan_out))`, biases zero. Deterministic given the seed.
pub fn init_params(layer_dims: &[usize], activations: &[Activation], seed: u64) -> Result<MlpParams> {
    if layer_dims.len() < 2 || activations.len() != layer_dims.len() - 1 {
        return Err(Error::InvalidConfig(format!(
            "need n+1 dims for n activations, got {} dims and {} activations",
            layer_dims.len(),
            activations.len()
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::InvalidConfig("zero layer dimension".into()));
    }
    let mut rng = rng::stream(seed, "glorot", &[]);
    let mut layers = Vec::with_capacity(activations.len());
    for (i, &act) in activations.iter().enumerate() {
        let (fan_in, fan_out) = (layer_dims[i], layer_dims[i + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut layer = DenseLayer::new(fan_in, fan_out, act);
        for w in &mut layer.weights {
            *w = rng::uniform_in(&mut rng, -limit, limit);
        }
        layers.push(layer);
    }
    Ok(MlpParams { layers })
}

/// Dropout behavior of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// Pre-activations per layer.
    pub pre: Vec<Vec<f64>>,
    /// Activations per layer, before dropout.
    pub act: Vec<Vec<f64>>,
    /// What the next layer consumed (activation × dropout mask).
    pub out: Vec<Vec<f64>>,
    /// Inverted-dropout masks for hidden layers, if sampled.
    pub masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.out.last().map_or(&[], Vec::as_slice)
    }

    /// Value of the final hidden layer (post-dropout), if any.
    pub fn final_hidden(&self) -> Option<&[f64]> {
        let n = self.out.len();
        if n >= 2 {
            Some(&self.out[n - 2])
        } else {
            None
        }
    }
}

fn apply_activation(act: Activation, z: &[f64]) -> Vec<f64> {
    match act {
        Activation::Identity => z.to_vec(),
        Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
        Activation::Sigmoid => z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
        Activation::Softmax => {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.iter().map(|e| e / sum).collect()
        }
    }
}

/// Forward pass. In train mode, inverted dropout is applied to every
/// hidden layer's activations; the output layer is never dropped. Infer
/// mode applies no dropout and no scaling.
pub fn forward(
    p: &MlpParams,
    input: &[f64],
    dropout_rate: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Vec<f64>, ForwardCache)> {
    if p.layers.is_empty() {
        return Err(Error::InvalidConfig("network needs at least one layer".into()));
    }
    if input.len() != p.input_dim() {
        return Err(Error::LengthMismatch {
            context: "forward input",
            expected: p.input_dim(),
            got: input.len(),
        });
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forward input".into()));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::InvalidConfig(format!(
            "dropout_rate must be in [0,1), got {dropout_rate}"
        )));
    }

    let num_layers = p.layers.len();
    let mut cache = ForwardCache {
        input: input.to_vec(),
        pre: Vec::with_capacity(num_layers),
        act: Vec::with_capacity(num_layers),
        out: Vec::with_capacity(num_layers),
        masks: Vec::with_capacity(num_layers),
    };

    let mut current = input.to_vec();
    let mut z = Vec::new();
    for (i, layer) in p.layers.iter().enumerate() {
        layer.affine(&current, &mut z);
        let a = apply_activation(layer.activation, &z);
        let is_hidden = i + 1 < num_layers;
        let (out, mask) = if is_hidden && mode == Mode::Train && dropout_rate > 0.0 {
            let keep = 1.0 - dropout_rate;
            let mask: Vec<f64> = a
                .iter()
                .map(|_| {
                    if rng::uniform(rng) < dropout_rate {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
                .collect();
            (
                a.iter().zip(&mask).map(|(v, m)| v * m).collect::<Vec<f64>>(),
                Some(mask),
            )
        } else {
            (a.clone(), None)
        };
        cache.pre.push(z.clone());
        cache.act.push(a);
        cache.masks.push(mask);
        current = out.clone();
        cache.out.push(out);
    }

    Ok((current, cache))
}

/// Per-layer gradient buffers matching a network's parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrads>,
}

impl ParamGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            layers: p
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for x in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *x *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Pull an output-space gradient back through the final activation.
fn output_grad_to_logits(act: Activation, a: &[f64], pre: &[f64], grad: &[f64]) -> Vec<f64> {
    match act {
        Activation::Identity => grad.to_vec(),
        Activation::Relu => pre
            .iter()
            .zip(grad)
            .map(|(z, g)| if *z > 0.0 { *g } else { 0.0 })
            .collect(),
        Activation::Sigmoid => a.iter().zip(grad).map(|(y, g)| g * y * (1.0 - y)).collect(),
        Activation::Softmax => {
            let dot: f64 = grad.iter().zip(a).map(|(g, y)| g * y).sum();
            a.iter().zip(grad).map(|(y, g)| y * (g - dot)).collect()
        }
    }
}

/// Accumulate the gradients implied by `dz_last` (gradient in the final
/// layer's pre-activation space) into `grads`, reusing any dropout masks
/// recorded in the cache.
pub(crate) fn backward_accumulate(
    p: &MlpParams,
    cache: &ForwardCache,
    dz_last: Vec<f64>,
    grads: &mut ParamGrads,
) -> Result<()> {
    let num_layers = p.layers.len();
    if grads.layers.len() != num_layers {
        return Err(Error::LengthMismatch {
            context: "backward gradient buffers",
            expected: num_layers,
            got: grads.layers.len(),
        });
    }
    let mut dz = dz_last;

    for i in (0..num_layers).rev() {
        let layer = &p.layers[i];
        if dz.len() != layer.out_dim {
            return Err(Error::LengthMismatch {
                context: "backward gradient",
                expected: layer.out_dim,
                got: dz.len(),
            });
        }
        let layer_input: &[f64] = if i == 0 { &cache.input } else { &cache.out[i - 1] };
        let g = &mut grads.layers[i];
        for (o, dzo) in dz.iter().enumerate() {
            let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (w, x) in row.iter_mut().zip(layer_input) {
                *w += dzo * x;
            }
            g.bias[o] += dzo;
        }
        if i == 0 {
            break;
        }
        // d(input of layer i) = Wᵀ dz, then back through dropout and the
        // previous activation.
        let mut dinput = vec![0.0; layer.in_dim];
        for (o, dzo) in dz.iter().enumerate() {
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (di, w) in dinput.iter_mut().zip(row) {
                *di += dzo * w;
            }
        }
        if let Some(mask) = &cache.masks[i - 1] {
            for (di, m) in dinput.iter_mut().zip(mask) {
                *di *= m;
            }
        }
        dz = output_grad_to_logits(
            p.layers[i - 1].activation,
            &cache.act[i - 1],
            &cache.pre[i - 1],
            &dinput,
        );
    }

    Ok(())
}

/// Exact gradients of the scalar objective whose gradient at the network
/// output is `output_grad`. The cache must come from a matching
/// [`forward`] call; dropout masks sampled there are reused here.
pub fn backward(p: &MlpParams, cache: &ForwardCache, output_grad: &[f64]) -> Result<ParamGrads> {
    let last = p
        .layers
        .last()
        .ok_or_else(|| Error::InvalidConfig("network needs at least one layer".into()))?;
    if output_grad.len() != last.out_dim {
        return Err(Error::LengthMismatch {
            context: "backward output_grad",
            expected: last.out_dim,
            got: output_grad.len(),
        });
    }
    let n = cache.act.len();
    let dz_last = output_grad_to_logits(
        last.activation,
        &cache.act[n - 1],
        &cache.pre[n - 1],
        output_grad,
    );
    let mut grads = ParamGrads::zeros_like(p);
    backward_accumulate(p, cache, dz_last, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but with the gradient given directly in the final
/// layer's pre-activation (logit) space — numerically preferable when the
/// objective and the output nonlinearity cancel (e.g. Bernoulli/sigmoid,
/// cross-entropy/softmax).
pub fn backward_from_logits(
    p: &MlpParams,
    cache: &ForwardCache,
    logit_grad: &[f64],
) -> Result<ParamGrads> {
    let mut grads = ParamGrads::zeros_like(p);
    backward_accumulate(p, cache, logit_grad.to_vec(), &mut grads)?;
    Ok(grads)
}
