//! The deep mixture of experts: expert SPP heads, gating distribution,
//! mixture log-likelihood with its gating posterior, and the
//! posterior-weighted gradients shared by joint and EM training.
//!
//! Per frame, expert `i` models the mask bits as independent Bernoullis
//! `ρ_{i,k}` and the gate supplies mixing probabilities `p_i`; the frame
//! likelihood is `Σ_i p_i · Π_k p(b_k | expert i)`, evaluated in log space
//! via log-sum-exp. The posterior weight of expert `i` given the label is
//! exactly the factor that scales each sub-network's gradient, so one
//! gradient-ascent step equals one generalized-EM direction.

mod checkpoint;
mod train;

pub use checkpoint::{
    load_model, model_from_bytes, model_to_bytes, save_model, DmoeModel, MODEL_MAGIC,
    MODEL_VERSION,
};
pub use train::{
    mean_log_likelihood, train_em, train_em_observed, train_joint, train_joint_observed,
    TrainConfig, TrainReport, TrainRow,
};

use crate::config::FeatureConfig;
use crate::dataset::FeaturePair;
use crate::mask::{BinaryMask, SppVector};
use crate::network::{
    backward_accumulate, forward, init_params, Activation, ForwardCache, MlpParams, Mode,
    ParamGrads,
};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Probabilities are floored at this value before any log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Gating network plus `m` expert networks.
#[derive(Debug, Clone, PartialEq)]
pub struct DmoeParams {
    pub gate: MlpParams,
    pub experts: Vec<MlpParams>,
}

impl DmoeParams {
    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn num_bins(&self) -> usize {
        self.experts.first().map_or(0, MlpParams::output_dim)
    }

    pub fn num_params(&self) -> usize {
        self.gate.num_params() + self.experts.iter().map(MlpParams::num_params).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.experts.is_empty() {
            return Err(Error::InvalidConfig("need at least one expert".into()));
        }
        self.gate.validate()?;
        if self.gate.output_dim() != self.experts.len() {
            return Err(Error::InvalidConfig(format!(
                "gate outputs {} probabilities for {} experts",
                self.gate.output_dim(),
                self.experts.len()
            )));
        }
        let (in_dim, out_dim) = (self.experts[0].input_dim(), self.experts[0].output_dim());
        for (i, e) in self.experts.iter().enumerate() {
            e.validate()?;
            if e.input_dim() != in_dim || e.output_dim() != out_dim {
                return Err(Error::InvalidConfig(format!(
                    "expert {i} dimensions differ from expert 0"
                )));
            }
        }
        Ok(())
    }

    /// All parameters flattened: gate first, then experts in order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.gate.flat();
        for e in &self.experts {
            out.extend(e.flat());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        let take = self.gate.num_params();
        self.gate.set_flat(&flat[offset..offset + take])?;
        offset += take;
        for e in &mut self.experts {
            let take = e.num_params();
            e.set_flat(&flat[offset..offset + take])?;
            offset += take;
        }
        if offset != flat.len() {
            return Err(Error::LengthMismatch {
                context: "DmoeParams::set_flat",
                expected: offset,
                got: flat.len(),
            });
        }
        Ok(())
    }
}

/// Network shape shared by all experts plus the gate.
#[derive(Debug, Clone, PartialEq)]
pub struct DmoeArch {
    pub expert_input: usize,
    pub gate_input: usize,
    pub num_bins: usize,
    pub hidden: Vec<usize>,
    pub num_experts: usize,
}

impl DmoeArch {
    /// Glorot-initialize the full model; each sub-network gets its own
    /// derived seed.
    pub fn init(&self, seed: u64) -> Result<DmoeParams> {
        if self.num_experts == 0 {
            return Err(Error::InvalidConfig("need at least one expert".into()));
        }
        let mut gate_dims = vec![self.gate_input];
        gate_dims.extend(&self.hidden);
        gate_dims.push(self.num_experts);
        let mut gate_acts = vec![Activation::Relu; self.hidden.len()];
        gate_acts.push(Activation::Softmax);
        let gate = init_params(&gate_dims, &gate_acts, rng::child_seed(seed, "gate-init", &[]))?;

        let mut expert_dims = vec![self.expert_input];
        expert_dims.extend(&self.hidden);
        expert_dims.push(self.num_bins);
        let mut expert_acts = vec![Activation::Relu; self.hidden.len()];
        expert_acts.push(Activation::Sigmoid);
        let experts = (0..self.num_experts)
            .map(|i| {
                init_params(
                    &expert_dims,
                    &expert_acts,
                    rng::child_seed(seed, "expert-init", &[i as u64]),
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let params = DmoeParams { gate, experts };
        params.validate()?;
        Ok(params)
    }
}

/// Posterior over experts for one frame: non-negative, sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingPosterior {
    weights: Vec<f64>,
}

impl GatingPosterior {
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NonFinite("gating posterior".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "gating posterior sums to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// The inputs of one frame, with the gate input already resolved (shared
/// or MFCC-based).
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    pub expert: &'a [f64],
    pub gate: &'a [f64],
    pub label: &'a BinaryMask,
}

impl<'a> FrameInput<'a> {
    pub fn from_pair(pair: &'a FeaturePair, shared_gate_input: bool) -> Self {
        Self {
            expert: &pair.expert_input,
            gate: if shared_gate_input {
                &pair.expert_input
            } else {
                &pair.gate_input
            },
            label: &pair.label,
        }
    }
}

/// Everything produced by one frame's forward pass.
#[derive(Debug, Clone)]
pub struct FrameEval {
    pub loglik: f64,
    pub posterior: Vec<f64>,
    pub gate_probs: Vec<f64>,
    pub expert_logliks: Vec<f64>,
    pub expert_spps: Vec<Vec<f64>>,
    pub gate_cache: ForwardCache,
    pub expert_caches: Vec<ForwardCache>,
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Bernoulli log-likelihood of the label bits under the expert's SPPs,
/// with each logged probability floored at [`PROB_FLOOR`].
fn bernoulli_loglik(label: &BinaryMask, spp: &[f64]) -> f64 {
    label
        .bits()
        .iter()
        .zip(spp)
        .map(|(b, rho)| {
            let p = if *b == 1 { *rho } else { 1.0 - rho };
            p.max(PROB_FLOOR).ln()
        })
        .sum()
}

/// Forward-evaluate one frame: all experts, the gate, the mixture
/// log-likelihood, and the gating posterior. Dropout (train mode) draws
/// masks from `rng` in a fixed order: gate first, then experts.
pub(crate) fn frame_eval(
    p: &DmoeParams,
    input: FrameInput<'_>,
    dropout: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<FrameEval> {
    let m = p.num_experts();
    let (gate_probs, gate_cache) = forward(&p.gate, input.gate, dropout, mode, rng)?;

    let mut expert_spps = Vec::with_capacity(m);
    let mut expert_caches = Vec::with_capacity(m);
    let mut expert_logliks = Vec::with_capacity(m);
    for expert in &p.experts {
        let (spp, cache) = forward(expert, input.expert, dropout, mode, rng)?;
        if spp.len() != input.label.len() {
            return Err(Error::LengthMismatch {
                context: "expert output vs label",
                expected: input.label.len(),
                got: spp.len(),
            });
        }
        expert_logliks.push(bernoulli_loglik(input.label, &spp));
        expert_spps.push(spp);
        expert_caches.push(cache);
    }

    // Mixture in log space: log Σ_i p_i·exp(ℓ_i).
    let joint: Vec<f64> = gate_probs
        .iter()
        .zip(&expert_logliks)
        .map(|(pi, ell)| pi.max(PROB_FLOOR).ln() + ell)
        .collect();
    let loglik = logsumexp(&joint);

    let mut posterior: Vec<f64> = joint.iter().map(|j| (j - loglik).exp()).collect();
    let sum: f64 = posterior.iter().sum();
    for w in &mut posterior {
        *w /= sum;
    }

    Ok(FrameEval {
        loglik,
        posterior,
        gate_probs,
        expert_logliks,
        expert_spps,
        gate_cache,
        expert_caches,
    })
}

fn infer_rng() -> Rng {
    rng::stream(0, "infer", &[])
}

/// SPP decision of expert `i` for one frame.
pub fn expert_spp(p: &DmoeParams, i: usize, expert_input: &[f64]) -> Result<SppVector> {
    let expert = p.experts.get(i).ok_or_else(|| Error::InvalidConfig(format!(
        "expert index {i} out of range for {} experts",
        p.num_experts()
    )))?;
    let (out, _) = forward(expert, expert_input, 0.0, Mode::Infer, &mut infer_rng())?;
    SppVector::from_probs(out)
}

/// Gating distribution over the experts for one frame.
pub fn gate_dist(p: &DmoeParams, gate_input: &[f64]) -> Result<Vec<f64>> {
    let (out, _) = forward(&p.gate, gate_input, 0.0, Mode::Infer, &mut infer_rng())?;
    Ok(out)
}

/// Final SPP: the gate-weighted average of the experts' decisions.
pub fn final_spp(p: &DmoeParams, expert_input: &[f64], gate_input: &[f64]) -> Result<SppVector> {
    let gate = gate_dist(p, gate_input)?;
    let mut combined = vec![0.0; p.num_bins()];
    for (i, pi) in gate.iter().enumerate() {
        let spp = expert_spp(p, i, expert_input)?;
        for (c, rho) in combined.iter_mut().zip(spp.probs()) {
            *c += pi * rho;
        }
    }
    // Guard the convex combination against rounding at the boundaries.
    for c in &mut combined {
        *c = c.clamp(0.0, 1.0);
    }
    SppVector::from_probs(combined)
}

/// Mixture log-likelihood of one labeled frame plus the gating posterior.
pub fn frame_log_likelihood(p: &DmoeParams, pair: &FeaturePair) -> Result<(f64, GatingPosterior)> {
    let eval = frame_eval(
        p,
        FrameInput::from_pair(pair, false),
        0.0,
        Mode::Infer,
        &mut infer_rng(),
    )?;
    Ok((eval.loglik, GatingPosterior::from_weights(eval.posterior)?))
}

/// Gradient buffers for the whole mixture.
#[derive(Debug, Clone)]
pub struct DmoeGrads {
    pub gate: ParamGrads,
    pub experts: Vec<ParamGrads>,
}

impl DmoeGrads {
    pub fn zeros_like(p: &DmoeParams) -> Self {
        Self {
            gate: ParamGrads::zeros_like(&p.gate),
            experts: p.experts.iter().map(ParamGrads::zeros_like).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.gate.scale(s);
        for e in &mut self.experts {
            e.scale(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gate.is_finite() && self.experts.iter().all(ParamGrads::is_finite)
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.gate.flat();
        for e in &self.experts {
            out.extend(e.flat());
        }
        out
    }
}

/// Accumulate one frame's posterior-weighted ascent gradients:
/// `w_i · ∇ log p(b | expert i)` per expert and `Σ_i w_i ∇ log p_i` for
/// the gate, both expressed directly in logit space.
pub(crate) fn accumulate_weighted_frame(
    p: &DmoeParams,
    eval: &FrameEval,
    weights: &[f64],
    label: &BinaryMask,
    grads: &mut DmoeGrads,
) -> Result<()> {
    let gate_dz: Vec<f64> = weights
        .iter()
        .zip(&eval.gate_probs)
        .map(|(w, pi)| w - pi)
        .collect();
    backward_accumulate(&p.gate, &eval.gate_cache, gate_dz, &mut grads.gate)?;

    for (i, expert) in p.experts.iter().enumerate() {
        let w = weights[i];
        let dz: Vec<f64> = label
            .bits()
            .iter()
            .zip(&eval.expert_spps[i])
            .map(|(b, rho)| w * (f64::from(*b) - rho))
            .collect();
        backward_accumulate(expert, &eval.expert_caches[i], dz, &mut grads.experts[i])?;
    }
    Ok(())
}

/// Ascent gradients of the summed mixture log-likelihood over a batch,
/// with the posterior weights computed frame by frame.
pub fn joint_gradients<'a, I>(p: &DmoeParams, batch: I) -> Result<DmoeGrads>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    joint_gradients_mode(p, batch, false, 0.0, Mode::Infer, 0, 0)
}

/// [`joint_gradients`] with explicit dropout and the seed path used to
/// draw per-frame masks during training.
pub(crate) fn joint_gradients_mode<'a, I>(
    p: &DmoeParams,
    batch: I,
    shared_gate_input: bool,
    dropout: f64,
    mode: Mode,
    seed: u64,
    epoch: u64,
) -> Result<DmoeGrads>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    let mut grads = DmoeGrads::zeros_like(p);
    let mut any = false;
    for (t, pair) in batch.into_iter().enumerate() {
        any = true;
        let mut frame_rng = rng::stream(seed, "dropout", &[epoch, t as u64]);
        let eval = frame_eval(
            p,
            FrameInput::from_pair(pair, shared_gate_input),
            dropout,
            mode,
            &mut frame_rng,
        )?;
        if !eval.loglik.is_finite() {
            return Err(Error::NonFinite(format!("log-likelihood at batch frame {t}")));
        }
        let weights = eval.posterior.clone();
        accumulate_weighted_frame(p, &eval, &weights, &pair.label, &mut grads)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!("gradients at batch frame {t}")));
        }
    }
    if !any {
        return Err(Error::InvalidConfig("joint_gradients: empty batch".into()));
    }
    Ok(grads)
}

/// E-step: the gating posterior of every frame at the current parameters.
pub fn e_step<'a, I>(p: &DmoeParams, batch: I) -> Result<Vec<GatingPosterior>>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    batch
        .into_iter()
        .map(|pair| frame_log_likelihood(p, pair).map(|(_, post)| post))
        .collect()
}

/// Ascent gradients of the M-step objectives (gate weighted cross-entropy
/// plus per-expert weighted Bernoulli likelihood) at the current
/// parameters, with the posteriors held fixed.
pub fn weighted_gradients<'a, I>(
    p: &DmoeParams,
    batch: I,
    posteriors: &[GatingPosterior],
) -> Result<DmoeGrads>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    let mut grads = DmoeGrads::zeros_like(p);
    let mut count = 0usize;
    for (t, pair) in batch.into_iter().enumerate() {
        let post = posteriors.get(t).ok_or(Error::LengthMismatch {
            context: "weighted_gradients posteriors",
            expected: t + 1,
            got: posteriors.len(),
        })?;
        let eval = frame_eval(
            p,
            FrameInput::from_pair(pair, false),
            0.0,
            Mode::Infer,
            &mut infer_rng(),
        )?;
        accumulate_weighted_frame(p, &eval, post.weights(), &pair.label, &mut grads)?;
        count += 1;
    }
    if count != posteriors.len() {
        return Err(Error::LengthMismatch {
            context: "weighted_gradients posteriors",
            expected: count,
            got: posteriors.len(),
        });
    }
    Ok(grads)
}

/// The M-step objective value at `p` under fixed posteriors:
/// `Σ_t Σ_i w_ti·log p_i + Σ_t Σ_i w_ti·log p(b_t | expert i)`.
pub fn em_mstep_objective<'a, I>(
    p: &DmoeParams,
    batch: I,
    posteriors: &[GatingPosterior],
) -> Result<f64>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    let mut total = 0.0;
    for (t, pair) in batch.into_iter().enumerate() {
        let post = posteriors.get(t).ok_or(Error::LengthMismatch {
            context: "em_mstep_objective posteriors",
            expected: t + 1,
            got: posteriors.len(),
        })?;
        let eval = frame_eval(
            p,
            FrameInput::from_pair(pair, false),
            0.0,
            Mode::Infer,
            &mut infer_rng(),
        )?;
        for (i, w) in post.weights().iter().enumerate() {
            total += w * eval.gate_probs[i].max(PROB_FLOOR).ln();
            total += w * eval.expert_logliks[i];
        }
    }
    Ok(total)
}

/// The model architecture a feature configuration implies.
pub fn arch_for(feature: &FeatureConfig, hidden: &[usize], num_experts: usize, shared_gate_input: bool) -> DmoeArch {
    DmoeArch {
        expert_input: feature.expert_dim(),
        gate_input: if shared_gate_input {
            feature.expert_dim()
        } else {
            feature.gate_dim()
        },
        num_bins: feature.num_bins(),
        hidden: hidden.to_vec(),
        num_experts,
    }
}
