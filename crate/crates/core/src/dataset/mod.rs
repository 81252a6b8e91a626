//! Corpus construction: SNR mixing, context-stacked features with oracle
//! mask labels, the synthetic two-regime generator, and the on-disk
//! corpus format.

mod fileio;
mod synth;

pub use fileio::{
    corpus_from_bytes, corpus_to_bytes, load_corpus, load_manifest, save_corpus, CorpusManifest,
    CORPUS_SCHEMA,
};
pub use synth::{build_synth_corpus, synth_corpus, white_noise, SynthUtterance};

use serde::{Deserialize, Serialize};

use crate::config::FeatureConfig;
use crate::mask::{max_mask, BinaryMask};
use crate::rng;
use crate::signal::{log_spectrum, mfcc, stft, CmvnStats, Waveform};
use crate::{Error, Result};

/// How a mixture is produced: target SNR, a tag naming the noise source,
/// and the seed that selects the noise segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub snr_db: f64,
    pub noise_kind: String,
    pub seed: u64,
}

impl MixSpec {
    pub fn new(snr_db: f64, noise_kind: impl Into<String>, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::NonFinite("snr_db".into()));
        }
        Ok(Self {
            snr_db,
            noise_kind: noise_kind.into(),
            seed,
        })
    }
}

/// One training frame: context-stacked normalized features for the expert
/// and the gate, plus the oracle mask label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePair {
    pub expert_input: Vec<f64>,
    pub gate_input: Vec<f64>,
    pub label: BinaryMask,
    /// Synthetic corpora tag each frame with its generating regime.
    pub regime_tag: Option<u32>,
}

/// Frames of one utterance, optionally with the audio that produced them
/// (in-memory corpora only; the file format stores frames alone).
#[derive(Debug, Clone)]
pub struct CorpusUtterance {
    pub pairs: Vec<FeaturePair>,
    pub audio: Option<UtteranceAudio>,
}

#[derive(Debug, Clone)]
pub struct UtteranceAudio {
    pub clean: Waveform,
    pub noisy: Waveform,
}

/// A feature corpus plus the configuration that produced it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub feature: FeatureConfig,
    pub utterances: Vec<CorpusUtterance>,
}

impl Corpus {
    pub fn num_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.pairs.len()).sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &FeaturePair> {
        self.utterances.iter().flat_map(|u| u.pairs.iter())
    }

    pub fn has_regime_tags(&self) -> bool {
        let mut any = false;
        for p in self.pairs() {
            if p.regime_tag.is_none() {
                return false;
            }
            any = true;
        }
        any
    }
}

/// Scale `noise` so that mixing it into `clean` hits the target SNR:
/// `10·log10(P_clean / P_scaled_noise) = snr_db` with P the mean power
/// over the utterance. Returns `(clean + scaled_noise, scaled_noise)`.
///
/// The noise must be at least as long as the clean signal; a segment at a
/// seed-chosen offset is used.
pub fn mix_at_snr(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    seed: u64,
) -> Result<(Waveform, Waveform)> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::ConfigMismatch {
            field: "sample_rate",
            model: clean.sample_rate.to_string(),
            pipeline: noise.sample_rate.to_string(),
        });
    }
    if noise.len() < clean.len() {
        return Err(Error::TooShort {
            needed: clean.len(),
            got: noise.len(),
        });
    }
    let p_clean = clean.power();
    if p_clean <= 0.0 {
        return Err(Error::ZeroPower("clean"));
    }

    let mut r = rng::stream(seed, "noise-offset", &[]);
    let slack = noise.len() - clean.len();
    let offset = if slack == 0 { 0 } else { rng::index(&mut r, slack + 1) };
    let segment = &noise.samples[offset..offset + clean.len()];
    let p_noise = segment.iter().map(|s| s * s).sum::<f64>() / segment.len() as f64;
    if p_noise <= 0.0 {
        return Err(Error::ZeroPower("noise"));
    }

    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = segment.iter().map(|s| s * gain).collect();
    let noisy: Vec<f64> = clean
        .samples
        .iter()
        .zip(&scaled)
        .map(|(c, n)| c + n)
        .collect();
    Ok((
        Waveform::new(noisy, clean.sample_rate)?,
        Waveform::new(scaled, clean.sample_rate)?,
    ))
}

/// Stack `2·context+1` consecutive frames around each frame, replicating
/// the boundary frame at the edges.
pub fn stack_context(frames: &[Vec<f64>], context: usize) -> Vec<Vec<f64>> {
    let n = frames.len() as i64;
    (0..n)
        .map(|t| {
            let mut stacked = Vec::with_capacity(frames[0].len() * (2 * context + 1));
            for d in -(context as i64)..=(context as i64) {
                let idx = (t + d).clamp(0, n - 1) as usize;
                stacked.extend_from_slice(&frames[idx]);
            }
            stacked
        })
        .collect()
}

/// Build the feature frames of one mixture: per-frame noisy log-spectrum
/// and MFCC, CMVN-normalized per utterance, context-stacked, with oracle
/// labels from the clean vs scaled-noise log-spectra.
///
/// Returns the pairs and the mixed (noisy) waveform.
pub fn build_pairs(
    clean: &Waveform,
    noise: &Waveform,
    spec: &MixSpec,
    cfg: &FeatureConfig,
) -> Result<(Vec<FeaturePair>, Waveform)> {
    build_pairs_tagged(clean, noise, spec, cfg, None)
}

/// [`build_pairs`] with optional per-frame regime tags (synthetic corpora).
pub fn build_pairs_tagged(
    clean: &Waveform,
    noise: &Waveform,
    spec: &MixSpec,
    cfg: &FeatureConfig,
    tags: Option<&[u32]>,
) -> Result<(Vec<FeaturePair>, Waveform)> {
    cfg.validate()?;
    if clean.len() < cfg.frame_len {
        return Err(Error::TooShort {
            needed: cfg.frame_len,
            got: clean.len(),
        });
    }
    let (noisy, scaled_noise) = mix_at_snr(clean, noise, spec.snr_db, spec.seed)?;

    let noisy_stft = stft(&noisy, cfg.frame_len, cfg.hop, cfg.window)?;
    let clean_stft = stft(clean, cfg.frame_len, cfg.hop, cfg.window)?;
    let noise_stft = stft(&scaled_noise, cfg.frame_len, cfg.hop, cfg.window)?;

    let noisy_log = log_spectrum(&noisy_stft);
    let clean_log = log_spectrum(&clean_stft);
    let noise_log = log_spectrum(&noise_stft);
    let gate_feats = mfcc(&noisy_stft, cfg.num_mel_filters, cfg.num_ceps)?;

    let num_frames = noisy_log.num_frames();
    if let Some(tags) = tags {
        if tags.len() != num_frames {
            return Err(Error::LengthMismatch {
                context: "regime tags",
                expected: num_frames,
                got: tags.len(),
            });
        }
    }

    // Per-frame features are normalized over the utterance first, then
    // stacked with context.
    let expert_frames = CmvnStats::fit(&noisy_log.frames)?.apply_all(&noisy_log.frames);
    let gate_frames = CmvnStats::fit(&gate_feats.frames)?.apply_all(&gate_feats.frames);
    let expert_stacked = stack_context(&expert_frames, cfg.context);
    let gate_stacked = stack_context(&gate_frames, cfg.context);

    let mut pairs = Vec::with_capacity(num_frames);
    for t in 0..num_frames {
        let label = max_mask(&clean_log.frames[t], &noise_log.frames[t])?;
        pairs.push(FeaturePair {
            expert_input: expert_stacked[t].clone(),
            gate_input: gate_stacked[t].clone(),
            label,
            regime_tag: tags.map(|ts| ts[t]),
        });
    }
    Ok((pairs, noisy))
}
