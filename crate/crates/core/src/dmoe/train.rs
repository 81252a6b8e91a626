//! Joint (direct likelihood ascent) and EM trainers.
//!
//! Both start from the same seeded initialization and share the
//! posterior-weighted gradient machinery; joint training recomputes the
//! posterior every minibatch while EM freezes it for a whole M-step.

use serde::{Deserialize, Serialize};

use super::{arch_for, frame_eval, DmoeGrads, DmoeParams, FrameInput};
use crate::dataset::{Corpus, FeaturePair};
use crate::network::{AdamConfig, AdamState, Mode};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of experts (m).
    pub num_experts: usize,
    /// Hidden layer widths shared by the gate and every expert.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Epochs for the joint trainer; EM iterations for the EM trainer.
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Feed the gate the expert input instead of MFCCs (ablation).
    pub shared_gate_input: bool,
    /// Minibatch passes per M-step (EM trainer only).
    pub em_inner_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_experts: 2,
            hidden: vec![500, 500, 500],
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 128,
            dropout: 0.2,
            seed: 0,
            shared_gate_input: false,
            em_inner_epochs: 3,
        }
    }
}

impl TrainConfig {
    /// Small networks for fast experiments alongside
    /// [`crate::FeatureConfig::desk_scale`]. 64-wide networks on the
    /// synthetic corpus want a bit more dropout than the wideband default.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            hidden: vec![64, 64, 64],
            dropout: 0.3,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_experts == 0 {
            return Err(Error::InvalidConfig("need at least one expert".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// One trace row: epoch (joint) or EM iteration (em) and the corpus mean
/// log-likelihood after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub index: usize,
    pub mean_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// "joint" or "em".
    pub trainer: String,
    pub initial_mean_loglik: f64,
    pub rows: Vec<TrainRow>,
    /// Index at which training aborted to the last good checkpoint.
    pub diverged_at: Option<usize>,
    pub config: TrainConfig,
}

impl TrainReport {
    pub fn final_mean_loglik(&self) -> f64 {
        self.rows
            .last()
            .map_or(self.initial_mean_loglik, |r| r.mean_loglik)
    }

    /// Fraction of non-decreasing transitions over
    /// `[initial, row1, row2, …]`.
    pub fn nondecreasing_fraction(&self) -> f64 {
        let mut seq = vec![self.initial_mean_loglik];
        seq.extend(self.rows.iter().map(|r| r.mean_loglik));
        if seq.len() < 2 {
            return 1.0;
        }
        let good = seq.windows(2).filter(|w| w[1] >= w[0]).count();
        good as f64 / (seq.len() - 1) as f64
    }
}

/// Corpus mean frame log-likelihood at fixed parameters (no dropout).
pub fn mean_log_likelihood<'a, I>(p: &DmoeParams, pairs: I, shared_gate_input: bool) -> Result<f64>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    let mut rng = rng::stream(0, "infer", &[]);
    let mut total = 0.0;
    let mut count = 0usize;
    for pair in pairs {
        let eval = frame_eval(
            p,
            FrameInput::from_pair(pair, shared_gate_input),
            0.0,
            Mode::Infer,
            &mut rng,
        )?;
        total += eval.loglik;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidConfig("mean_log_likelihood: empty corpus".into()));
    }
    Ok(total / count as f64)
}

struct DmoeAdam {
    gate: AdamState,
    experts: Vec<AdamState>,
}

impl DmoeAdam {
    fn new(p: &DmoeParams, cfg: AdamConfig) -> Self {
        Self {
            gate: AdamState::new(&p.gate, cfg),
            experts: p.experts.iter().map(|e| AdamState::new(e, cfg)).collect(),
        }
    }

    fn step(&mut self, p: &mut DmoeParams, grads: &DmoeGrads) -> Result<()> {
        self.gate.step(&mut p.gate, &grads.gate)?;
        for ((expert, state), g) in p
            .experts
            .iter_mut()
            .zip(self.experts.iter_mut())
            .zip(&grads.experts)
        {
            state.step(expert, g)?;
        }
        Ok(())
    }
}

fn init_from_corpus(corpus: &Corpus, cfg: &TrainConfig) -> Result<(DmoeParams, Vec<usize>)> {
    cfg.validate()?;
    let n = corpus.num_frames();
    if n == 0 {
        return Err(Error::InvalidConfig("training corpus is empty".into()));
    }
    let arch = arch_for(
        &corpus.feature,
        &cfg.hidden,
        cfg.num_experts,
        cfg.shared_gate_input,
    );
    // The corpus must agree with its own feature configuration.
    if let Some(pair) = corpus.pairs().next() {
        if pair.expert_input.len() != arch.expert_input {
            return Err(Error::ConfigMismatch {
                field: "expert_input_dim",
                model: arch.expert_input.to_string(),
                pipeline: pair.expert_input.len().to_string(),
            });
        }
        if pair.label.len() != arch.num_bins {
            return Err(Error::ConfigMismatch {
                field: "num_bins",
                model: arch.num_bins.to_string(),
                pipeline: pair.label.len().to_string(),
            });
        }
    }
    let params = arch.init(cfg.seed)?;
    Ok((params, (0..n).collect()))
}

/// Minibatch stochastic gradient ascent with Adam on the mixture
/// log-likelihood. Deterministic given the seed; on divergence the last
/// good checkpoint is returned with `diverged_at` set.
pub fn train_joint(corpus: &Corpus, cfg: &TrainConfig) -> Result<(DmoeParams, TrainReport)> {
    train_joint_observed(corpus, cfg, &mut |_| {})
}

/// [`train_joint`] with a per-epoch observer (progress reporting only; it
/// does not influence the run).
pub fn train_joint_observed(
    corpus: &Corpus,
    cfg: &TrainConfig,
    on_row: &mut dyn FnMut(&TrainRow),
) -> Result<(DmoeParams, TrainReport)> {
    let (mut params, mut order) = init_from_corpus(corpus, cfg)?;
    let pairs: Vec<&FeaturePair> = corpus.pairs().collect();

    let initial = mean_log_likelihood(&params, pairs.iter().copied(), cfg.shared_gate_input)?;
    let mut report = TrainReport {
        trainer: "joint".to_string(),
        initial_mean_loglik: initial,
        rows: Vec::with_capacity(cfg.epochs),
        diverged_at: None,
        config: cfg.clone(),
    };

    let mut adam = DmoeAdam::new(
        &params,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut last_good = params.clone();

    'epochs: for epoch in 1..=cfg.epochs {
        let mut shuffle_rng = rng::stream(cfg.seed, "shuffle", &[epoch as u64]);
        rng::shuffle(&mut shuffle_rng, &mut order);

        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk.iter().map(|&t| pairs[t]);
            let grads = epoch_batch_gradients(&params, batch, chunk, cfg, epoch as u64);
            let ok = grads.and_then(|mut g| {
                g.scale(-1.0 / chunk.len() as f64);
                adam.step(&mut params, &g)
            });
            if ok.is_err() {
                report.diverged_at = Some(epoch);
                params = last_good;
                break 'epochs;
            }
        }

        let ll = mean_log_likelihood(&params, pairs.iter().copied(), cfg.shared_gate_input)?;
        if !ll.is_finite() {
            report.diverged_at = Some(epoch);
            params = last_good;
            break;
        }
        let row = TrainRow {
            index: epoch,
            mean_loglik: ll,
        };
        on_row(&row);
        report.rows.push(row);
        last_good = params.clone();
    }

    Ok((params, report))
}

/// Gradients of one minibatch with per-frame dropout masks derived from
/// `(seed, epoch, frame index)` so runs are reproducible independent of
/// batch boundaries.
fn epoch_batch_gradients<'a, I>(
    params: &DmoeParams,
    batch: I,
    frame_indices: &[usize],
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<DmoeGrads>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    let mut grads = DmoeGrads::zeros_like(params);
    for (pair, &t) in batch.into_iter().zip(frame_indices) {
        let mut frame_rng = rng::stream(cfg.seed, "dropout", &[epoch, t as u64]);
        let eval = frame_eval(
            params,
            FrameInput::from_pair(pair, cfg.shared_gate_input),
            cfg.dropout,
            Mode::Train,
            &mut frame_rng,
        )?;
        if !eval.loglik.is_finite() {
            return Err(Error::NonFinite(format!("log-likelihood at frame {t}")));
        }
        let weights = eval.posterior.clone();
        super::accumulate_weighted_frame(params, &eval, &weights, &pair.label, &mut grads)?;
    }
    Ok(grads)
}

/// EM training: E-step posteriors frozen, then `em_inner_epochs` minibatch
/// Adam passes on the weighted M-step objectives, repeated for
/// `cfg.epochs` EM iterations. Reports the mixture mean log-likelihood
/// after each iteration.
pub fn train_em(corpus: &Corpus, cfg: &TrainConfig) -> Result<(DmoeParams, TrainReport)> {
    train_em_observed(corpus, cfg, &mut |_| {})
}

/// [`train_em`] with a per-iteration observer.
pub fn train_em_observed(
    corpus: &Corpus,
    cfg: &TrainConfig,
    on_row: &mut dyn FnMut(&TrainRow),
) -> Result<(DmoeParams, TrainReport)> {
    let (mut params, mut order) = init_from_corpus(corpus, cfg)?;
    let pairs: Vec<&FeaturePair> = corpus.pairs().collect();

    let initial = mean_log_likelihood(&params, pairs.iter().copied(), cfg.shared_gate_input)?;
    let mut report = TrainReport {
        trainer: "em".to_string(),
        initial_mean_loglik: initial,
        rows: Vec::with_capacity(cfg.epochs),
        diverged_at: None,
        config: cfg.clone(),
    };

    let mut adam = DmoeAdam::new(
        &params,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut last_good = params.clone();

    'iters: for iter in 1..=cfg.epochs {
        // E-step at frozen parameters. With shared gate input the
        // posterior must be computed on the same inputs the gate sees.
        let posts: Result<Vec<Vec<f64>>> = pairs
            .iter()
            .map(|pair| {
                let mut r = rng::stream(0, "infer", &[]);
                frame_eval(
                    &params,
                    FrameInput::from_pair(pair, cfg.shared_gate_input),
                    0.0,
                    Mode::Infer,
                    &mut r,
                )
                .map(|e| e.posterior)
            })
            .collect();
        let posts = match posts {
            Ok(p) => p,
            Err(_) => {
                report.diverged_at = Some(iter);
                params = last_good;
                break;
            }
        };

        // M-step: weighted-gradient ascent with the posteriors fixed.
        for inner in 1..=cfg.em_inner_epochs {
            let mut shuffle_rng =
                rng::stream(cfg.seed, "em-shuffle", &[iter as u64, inner as u64]);
            rng::shuffle(&mut shuffle_rng, &mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let mut grads = DmoeGrads::zeros_like(&params);
                let step = chunk.iter().try_for_each(|&t| -> Result<()> {
                    let mut frame_rng = rng::stream(
                        cfg.seed,
                        "em-dropout",
                        &[iter as u64, inner as u64, t as u64],
                    );
                    let eval = frame_eval(
                        &params,
                        FrameInput::from_pair(pairs[t], cfg.shared_gate_input),
                        cfg.dropout,
                        Mode::Train,
                        &mut frame_rng,
                    )?;
                    super::accumulate_weighted_frame(
                        &params,
                        &eval,
                        &posts[t],
                        &pairs[t].label,
                        &mut grads,
                    )
                });
                let ok = step.and_then(|_| {
                    grads.scale(-1.0 / chunk.len() as f64);
                    adam.step(&mut params, &grads)
                });
                if ok.is_err() {
                    report.diverged_at = Some(iter);
                    params = last_good;
                    break 'iters;
                }
            }
        }

        let ll = mean_log_likelihood(&params, pairs.iter().copied(), cfg.shared_gate_input)?;
        if !ll.is_finite() {
            report.diverged_at = Some(iter);
            params = last_good;
            break;
        }
        let row = TrainRow {
            index: iter,
            mean_loglik: ll,
        };
        on_row(&row);
        report.rows.push(row);
        last_good = params.clone();
    }

    Ok((params, report))
}
