//! Model introspection: gating routing statistics per frame regime, the
//! all-ones expert probe, and expert-count sweeps.

use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, FeaturePair};
use crate::dmoe::{final_spp, gate_dist, train_joint, DmoeModel, DmoeParams, TrainConfig};
use crate::enhance::{enhance_utterance, EnhanceOptions};
use crate::eval::{mask_metrics, segmental_snr};
use crate::mask::{BinaryMask, SppVector};
use crate::{Error, Result};

/// Gate usage of one regime: soft means and hard (argmax) fractions over
/// its frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeRow {
    pub regime: u32,
    pub frames: usize,
    pub mean_gate: Vec<f64>,
    pub hard_fraction: Vec<f64>,
}

impl RegimeRow {
    /// The expert this regime routes to most often.
    pub fn majority_expert(&self) -> usize {
        self.hard_fraction
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    }

    pub fn majority_fraction(&self) -> f64 {
        self.hard_fraction[self.majority_expert()]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatingStats {
    pub regimes: Vec<RegimeRow>,
    /// Entropy (nats) of the mean soft gate distribution over all frames.
    pub routing_entropy: f64,
}

/// Per-regime gate usage. Every frame must carry a regime tag.
pub fn gating_stats<'a, I>(model: &DmoeModel, pairs: I) -> Result<GatingStats>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    let m = model.params.num_experts();
    let mut by_regime: Vec<(u32, Vec<f64>, Vec<f64>, usize)> = Vec::new();
    let mut overall = vec![0.0; m];
    let mut total_frames = 0usize;

    for pair in pairs {
        let tag = pair.regime_tag.ok_or_else(|| {
            Error::InvalidConfig("gating_stats requires regime tags on every frame".into())
        })?;
        let gate_input: &[f64] = if model.shared_gate_input {
            &pair.expert_input
        } else {
            &pair.gate_input
        };
        let g = gate_dist(&model.params, gate_input)?;
        let argmax = g
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);

        let row = match by_regime.iter_mut().find(|(r, ..)| *r == tag) {
            Some(row) => row,
            None => {
                by_regime.push((tag, vec![0.0; m], vec![0.0; m], 0));
                by_regime.last_mut().unwrap()
            }
        };
        for (acc, gi) in row.1.iter_mut().zip(&g) {
            *acc += gi;
        }
        row.2[argmax] += 1.0;
        row.3 += 1;

        for (acc, gi) in overall.iter_mut().zip(&g) {
            *acc += gi;
        }
        total_frames += 1;
    }

    if total_frames == 0 {
        return Err(Error::InvalidConfig("gating_stats: empty corpus".into()));
    }

    by_regime.sort_by_key(|(r, ..)| *r);
    let regimes = by_regime
        .into_iter()
        .map(|(regime, mut mean, mut hard, frames)| {
            for v in mean.iter_mut().chain(hard.iter_mut()) {
                *v /= frames as f64;
            }
            RegimeRow {
                regime,
                frames,
                mean_gate: mean,
                hard_fraction: hard,
            }
        })
        .collect();

    let routing_entropy = -overall
        .iter()
        .map(|v| {
            let p = v / total_frames as f64;
            if p > 0.0 {
                p * p.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>();

    Ok(GatingStats {
        regimes,
        routing_entropy,
    })
}

/// Final SPP per frame with every expert fed a constant all-ones vector;
/// only the gate sees the real frame. The result exposes each expert's
/// intrinsic spectral template.
pub fn expert_probe<'a, I>(model: &DmoeModel, pairs: I) -> Result<Vec<SppVector>>
where
    I: IntoIterator<Item = &'a FeaturePair>,
{
    let ones = vec![1.0; model.params.experts[0].input_dim()];
    pairs
        .into_iter()
        .map(|pair| {
            let gate_input: &[f64] = if model.shared_gate_input {
                &pair.expert_input
            } else {
                &pair.gate_input
            };
            final_spp(&model.params, &ones, gate_input)
        })
        .collect()
}

/// One sweep result: the model size and its evaluation on the held-out set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_experts: usize,
    pub mask_accuracy: f64,
    pub mask_auc: f64,
    /// Mean enhanced-vs-clean segmental SNR over eval utterances with
    /// audio; absent for feature-only corpora.
    pub ssnr_db: Option<f64>,
    pub final_mean_loglik: f64,
}

/// Evaluate a trained model's final SPPs against the oracle labels of a
/// corpus, plus segmental SNR when audio is available.
pub fn evaluate_on_corpus(model: &DmoeModel, corpus: &Corpus) -> Result<SweepRow> {
    let mut predicted = Vec::with_capacity(corpus.num_frames());
    let mut truth: Vec<BinaryMask> = Vec::with_capacity(corpus.num_frames());
    for pair in corpus.pairs() {
        let gate_input: &[f64] = if model.shared_gate_input {
            &pair.expert_input
        } else {
            &pair.gate_input
        };
        predicted.push(final_spp(&model.params, &pair.expert_input, gate_input)?);
        truth.push(pair.label.clone());
    }
    let (mask_accuracy, mask_auc) = mask_metrics(&predicted, &truth)?;

    let mut ssnr_sum = 0.0;
    let mut ssnr_count = 0usize;
    for utt in &corpus.utterances {
        if let Some(audio) = &utt.audio {
            let out = enhance_utterance(model, &audio.noisy, &EnhanceOptions::default())?;
            ssnr_sum += segmental_snr(&audio.clean, &out.enhanced)?;
            ssnr_count += 1;
        }
    }

    let final_mean_loglik = crate::dmoe::mean_log_likelihood(
        &model.params,
        corpus.pairs(),
        model.shared_gate_input,
    )?;

    Ok(SweepRow {
        num_experts: model.params.num_experts(),
        mask_accuracy,
        mask_auc,
        ssnr_db: if ssnr_count > 0 {
            Some(ssnr_sum / ssnr_count as f64)
        } else {
            None
        },
        final_mean_loglik,
    })
}

/// Train one model per expert count under identical budgets and seeds and
/// evaluate each on the held-out corpus.
pub fn expert_sweep(
    train: &Corpus,
    eval: &Corpus,
    m_list: &[usize],
    base: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    m_list
        .iter()
        .map(|&m| {
            let cfg = TrainConfig {
                num_experts: m,
                ..base.clone()
            };
            let (params, _) = train_joint(train, &cfg)?;
            let model = DmoeModel {
                params,
                feature: train.feature.clone(),
                shared_gate_input: cfg.shared_gate_input,
            };
            evaluate_on_corpus(&model, eval)
        })
        .collect()
}

/// Train a single model (used by the sweep CLI when parallelism is on).
pub fn train_for_sweep(train: &Corpus, base: &TrainConfig, m: usize) -> Result<DmoeParams> {
    let cfg = TrainConfig {
        num_experts: m,
        ..base.clone()
    };
    Ok(train_joint(train, &cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_synth_corpus;
    use crate::dmoe::DmoeArch;
    use crate::rng;
    use crate::FeatureConfig;

    fn desk_model(feature: &FeatureConfig, m: usize, seed: u64) -> DmoeModel {
        let arch = DmoeArch {
            expert_input: feature.expert_dim(),
            gate_input: feature.gate_dim(),
            num_bins: feature.num_bins(),
            hidden: vec![16],
            num_experts: m,
        };
        DmoeModel {
            params: arch.init(seed).unwrap(),
            feature: feature.clone(),
            shared_gate_input: false,
        }
    }

    fn small_corpus(seed: u64) -> Corpus {
        let mut f = FeatureConfig::desk_scale();
        f.context = 1;
        build_synth_corpus(4, 5.0, seed, &f).unwrap()
    }

    #[test]
    fn untrained_symmetric_init_routes_near_uniformly() {
        let corpus = small_corpus(50);
        let model = desk_model(&corpus.feature, 2, 51);
        let stats = gating_stats(&model, corpus.pairs()).unwrap();
        let max_entropy = (2.0_f64).ln();
        assert!(
            (stats.routing_entropy - max_entropy).abs() < 0.1,
            "entropy {} vs ln 2 {}",
            stats.routing_entropy,
            max_entropy
        );
    }

    #[test]
    fn stats_rows_sum_to_one() {
        let corpus = small_corpus(52);
        let model = desk_model(&corpus.feature, 3, 53);
        let stats = gating_stats(&model, corpus.pairs()).unwrap();
        assert_eq!(stats.regimes.len(), 2);
        for row in &stats.regimes {
            let soft: f64 = row.mean_gate.iter().sum();
            let hard: f64 = row.hard_fraction.iter().sum();
            assert!((soft - 1.0).abs() < 1e-9, "soft sum {soft}");
            assert!((hard - 1.0).abs() < 1e-9, "hard sum {hard}");
            assert!(row.frames > 0);
        }
    }

    #[test]
    fn single_expert_table_is_all_ones() {
        let corpus = small_corpus(54);
        let model = desk_model(&corpus.feature, 1, 55);
        let stats = gating_stats(&model, corpus.pairs()).unwrap();
        for row in &stats.regimes {
            assert_eq!(row.mean_gate, vec![1.0]);
            assert_eq!(row.hard_fraction, vec![1.0]);
        }
        assert!(stats.routing_entropy.abs() < 1e-12);
    }

    #[test]
    fn missing_tags_are_an_error() {
        let corpus = small_corpus(56);
        let model = desk_model(&corpus.feature, 2, 57);
        let mut untagged: Vec<FeaturePair> = corpus.pairs().cloned().collect();
        for p in &mut untagged {
            p.regime_tag = None;
        }
        assert!(gating_stats(&model, untagged.iter()).is_err());
    }

    #[test]
    fn probe_depends_only_on_the_gate_input() {
        let corpus = small_corpus(58);
        let model = desk_model(&corpus.feature, 2, 59);
        let probe = expert_probe(&model, corpus.pairs()).unwrap();
        assert_eq!(probe.len(), corpus.num_frames());

        // Permuting expert inputs leaves the probe unchanged.
        let mut permuted: Vec<FeaturePair> = corpus.pairs().cloned().collect();
        let mut r = rng::stream(60, "probe", &[]);
        let mut order: Vec<usize> = (0..permuted.len()).collect();
        rng::shuffle(&mut r, &mut order);
        let expert_inputs: Vec<Vec<f64>> =
            permuted.iter().map(|p| p.expert_input.clone()).collect();
        for (i, p) in permuted.iter_mut().enumerate() {
            p.expert_input = expert_inputs[order[i]].clone();
        }
        let probe2 = expert_probe(&model, permuted.iter()).unwrap();
        for (a, b) in probe.iter().zip(&probe2) {
            assert_eq!(a.probs(), b.probs());
        }
    }

    #[test]
    fn single_expert_probe_is_constant_across_frames() {
        let corpus = small_corpus(61);
        let model = desk_model(&corpus.feature, 1, 62);
        let probe = expert_probe(&model, corpus.pairs()).unwrap();
        let first = probe[0].probs().to_vec();
        for s in &probe {
            assert_eq!(s.probs(), first.as_slice());
        }
    }

    #[test]
    fn two_expert_probe_has_at_most_two_hard_patterns() {
        // With saturated expert templates (the shape trained models take)
        // and a decisive gate, the probe can only show one template per
        // frame, so thresholding yields at most two distinct patterns.
        let corpus = small_corpus(63);
        let mut model = desk_model(&corpus.feature, 2, 64);
        for (i, expert) in model.params.experts.iter_mut().enumerate() {
            let last = expert.layers.last_mut().unwrap();
            for w in last.weights.iter_mut() {
                *w = 0.0;
            }
            for (k, b) in last.bias.iter_mut().enumerate() {
                // Expert 0 passes even bins, expert 1 odd bins.
                *b = if k % 2 == i { 30.0 } else { -30.0 };
            }
        }
        for w in model.params.gate.layers.last_mut().unwrap().weights.iter_mut() {
            *w *= 50.0;
        }
        let probe = expert_probe(&model, corpus.pairs()).unwrap();
        let mut patterns: Vec<Vec<u8>> = Vec::new();
        for s in &probe {
            let hard = s.threshold().bits().to_vec();
            if !patterns.contains(&hard) {
                patterns.push(hard);
            }
        }
        assert!(
            (1..=2).contains(&patterns.len()),
            "found {} hard patterns",
            patterns.len()
        );
    }

    #[test]
    fn evaluate_on_corpus_reports_all_metrics() {
        let corpus = small_corpus(65);
        let model = desk_model(&corpus.feature, 2, 66);
        let row = evaluate_on_corpus(&model, &corpus).unwrap();
        assert!(row.mask_accuracy > 0.0 && row.mask_accuracy < 1.0);
        assert!(row.mask_auc >= 0.0 && row.mask_auc <= 1.0);
        assert!(row.ssnr_db.is_some());
        assert!(row.final_mean_loglik.is_finite());
    }
}
