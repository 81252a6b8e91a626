//! Objective enhancement metrics: segmental SNR, mask accuracy and AUC,
//! and log-spectral distortion.
//!
//! SSNR and LSD are reference-directional: the first argument is the
//! reference. LSD is symmetric in value; SSNR is not.

use serde::{Deserialize, Serialize};

use crate::mask::{BinaryMask, SppVector};
use crate::signal::{LogSpectrum, Waveform};
use crate::{Error, Result};

/// Framing used by [`segmental_snr`].
pub const SSNR_FRAME: usize = 512;
pub const SSNR_HOP: usize = 256;
/// Per-frame SNR clamp in dB.
pub const SSNR_CLAMP: (f64, f64) = (-10.0, 35.0);
/// Frames with reference energy below this fraction of the mean frame
/// energy are excluded as silence.
const SILENCE_REL_THRESHOLD: f64 = 1e-8;

/// Metrics of one evaluated condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean segmental SNR of the enhanced signal against the clean
    /// reference (dB); absent when no audio was available.
    pub ssnr_db: Option<f64>,
    /// Fraction of bins where the thresholded SPP matches the oracle mask.
    pub mask_accuracy: f64,
    /// Rank-statistic AUC of the SPP against the oracle mask.
    pub mask_auc: f64,
    /// RMS log-spectral distortion in natural-log units; absent without audio.
    pub lsd: Option<f64>,
    pub utterances: Vec<UtteranceEval>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceEval {
    pub index: usize,
    pub ssnr_noisy_db: Option<f64>,
    pub ssnr_enhanced_db: Option<f64>,
    pub mask_accuracy: f64,
}

/// Mean over voiced frames of the clamped per-frame SNR
/// `10·log10(Σref² / Σ(ref−test)²)`.
pub fn segmental_snr(reference: &Waveform, test: &Waveform) -> Result<f64> {
    if reference.len() != test.len() {
        return Err(Error::LengthMismatch {
            context: "segmental_snr",
            expected: reference.len(),
            got: test.len(),
        });
    }
    if reference.sample_rate != test.sample_rate {
        return Err(Error::ConfigMismatch {
            field: "sample_rate",
            model: reference.sample_rate.to_string(),
            pipeline: test.sample_rate.to_string(),
        });
    }
    if reference.len() < SSNR_FRAME {
        return Err(Error::TooShort {
            needed: SSNR_FRAME,
            got: reference.len(),
        });
    }

    let num_frames = (reference.len() - SSNR_FRAME) / SSNR_HOP + 1;
    let frame_energy: Vec<f64> = (0..num_frames)
        .map(|f| {
            let s = f * SSNR_HOP;
            reference.samples[s..s + SSNR_FRAME]
                .iter()
                .map(|x| x * x)
                .sum()
        })
        .collect();
    let mean_energy = frame_energy.iter().sum::<f64>() / num_frames as f64;
    let threshold = SILENCE_REL_THRESHOLD * mean_energy;

    let mut total = 0.0;
    let mut counted = 0usize;
    for (f, &ref_energy) in frame_energy.iter().enumerate() {
        if ref_energy <= threshold {
            continue;
        }
        let s = f * SSNR_HOP;
        let err_energy: f64 = reference.samples[s..s + SSNR_FRAME]
            .iter()
            .zip(&test.samples[s..s + SSNR_FRAME])
            .map(|(r, t)| (r - t) * (r - t))
            .sum();
        let snr = if err_energy <= 0.0 {
            SSNR_CLAMP.1
        } else {
            (10.0 * (ref_energy / err_energy).log10()).clamp(SSNR_CLAMP.0, SSNR_CLAMP.1)
        };
        total += snr;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::InvalidConfig(
            "segmental_snr: no frames above the silence threshold".into(),
        ));
    }
    Ok(total / counted as f64)
}

/// Accuracy at threshold 0.5 and rank-statistic AUC of predicted SPPs
/// against oracle masks, pooled over all (frame, bin) pairs.
///
/// AUC uses midranks, so tied scores contribute half a concordant pair;
/// with only one class present it degenerates to 0.5.
pub fn mask_metrics(predicted: &[SppVector], truth: &[BinaryMask]) -> Result<(f64, f64)> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            context: "mask_metrics frames",
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let mut scores: Vec<(f64, u8)> = Vec::new();
    let mut correct = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::LengthMismatch {
                context: "mask_metrics bins",
                expected: t.len(),
                got: p.len(),
            });
        }
        for (rho, b) in p.probs().iter().zip(t.bits()) {
            if u8::from(*rho >= 0.5) == *b {
                correct += 1;
            }
            scores.push((*rho, *b));
        }
    }
    if scores.is_empty() {
        return Err(Error::InvalidConfig("mask_metrics: empty input".into()));
    }
    let accuracy = correct as f64 / scores.len() as f64;

    // Mann–Whitney with midranks.
    let num_pos = scores.iter().filter(|(_, b)| *b == 1).count();
    let num_neg = scores.len() - num_pos;
    if num_pos == 0 || num_neg == 0 {
        return Ok((accuracy, 0.5));
    }
    scores.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0usize;
    while i < scores.len() {
        let mut j = i;
        while j + 1 < scores.len() && scores[j + 1].0 == scores[i].0 {
            j += 1;
        }
        // 1-based midrank of the tie group [i, j].
        let midrank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = scores[i..=j].iter().filter(|(_, b)| *b == 1).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let auc = (rank_sum_pos - (num_pos * (num_pos + 1)) as f64 / 2.0)
        / (num_pos as f64 * num_neg as f64);
    Ok((accuracy, auc))
}

/// RMS of the element-wise difference over all bins and frames.
pub fn log_spectral_distortion(a: &LogSpectrum, b: &LogSpectrum) -> Result<f64> {
    if a.num_frames() != b.num_frames() {
        return Err(Error::LengthMismatch {
            context: "log_spectral_distortion frames",
            expected: a.num_frames(),
            got: b.num_frames(),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        if fa.len() != fb.len() {
            return Err(Error::LengthMismatch {
                context: "log_spectral_distortion bins",
                expected: fa.len(),
                got: fb.len(),
            });
        }
        for (x, y) in fa.iter().zip(fb) {
            sum += (x - y) * (x - y);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidConfig("log_spectral_distortion: empty grids".into()));
    }
    Ok((sum / count as f64).sqrt())
}
