//! End-to-end enhancement: noisy waveform → features → final SPP → soft
//! attenuation → ISTFT with the noisy phase.
//!
//! CMVN is applied only on the feature path into the networks; the
//! attenuation acts on the raw log-magnitudes, so a model that always
//! outputs ρ≡1 returns the input up to the analysis round-trip.

use crate::dataset::{mix_at_snr, stack_context, MixSpec};
use crate::dmoe::{final_spp, DmoeModel};
use crate::mask::{hard_mask_apply, max_mask, soft_attenuate, EnhanceConfig, SppVector};
use crate::signal::{istft, log_spectrum, mfcc, stft, CmvnStats, Stft, Waveform};
use crate::{Error, FeatureConfig, Result};

#[derive(Debug, Clone)]
pub struct EnhanceOptions {
    pub config: EnhanceConfig,
    /// Rescale the output only if it clips (|sample| > 1).
    pub peak_normalize: bool,
}

impl Default for EnhanceOptions {
    fn default() -> Self {
        Self {
            config: EnhanceConfig::default(),
            peak_normalize: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnhanceOutput {
    pub enhanced: Waveform,
    /// Final SPP per analysis frame.
    pub spp_track: Vec<SppVector>,
}

fn check_model_config(model: &DmoeModel, noisy: &Waveform) -> Result<()> {
    let f = &model.feature;
    f.validate()?;
    if noisy.sample_rate != f.sample_rate {
        return Err(Error::ConfigMismatch {
            field: "sample_rate",
            model: f.sample_rate.to_string(),
            pipeline: noisy.sample_rate.to_string(),
        });
    }
    let expert_in = model.params.experts[0].input_dim();
    if expert_in != f.expert_dim() {
        return Err(Error::ConfigMismatch {
            field: "expert_input_dim",
            model: expert_in.to_string(),
            pipeline: f.expert_dim().to_string(),
        });
    }
    let gate_in = model.params.gate.input_dim();
    let want_gate = if model.shared_gate_input {
        f.expert_dim()
    } else {
        f.gate_dim()
    };
    if gate_in != want_gate {
        return Err(Error::ConfigMismatch {
            field: "gate_input_dim",
            model: gate_in.to_string(),
            pipeline: want_gate.to_string(),
        });
    }
    if model.params.num_bins() != f.num_bins() {
        return Err(Error::ConfigMismatch {
            field: "num_bins",
            model: model.params.num_bins().to_string(),
            pipeline: f.num_bins().to_string(),
        });
    }
    Ok(())
}

fn reconstruct(
    enhanced_log: &[Vec<f64>],
    phase_source: &Stft,
    original_len: usize,
    peak_normalize: bool,
) -> Result<Waveform> {
    let mut mag = phase_source.clone();
    for (frame, log_frame) in mag.frames.iter_mut().zip(enhanced_log) {
        for (c, l) in frame.iter_mut().zip(log_frame) {
            *c = rustfft::num_complex::Complex::new(l.exp(), 0.0);
        }
    }
    let mut out = istft(&mag, phase_source, Some(original_len))?;
    if peak_normalize {
        let peak = out.samples.iter().map(|s| s.abs()).fold(0.0_f64, f64::max);
        if peak > 1.0 {
            for s in &mut out.samples {
                *s /= peak;
            }
        }
    }
    Ok(out)
}

/// Enhance one utterance with a trained model. Returns the enhanced
/// waveform and the per-frame final SPP.
pub fn enhance_utterance(
    model: &DmoeModel,
    noisy: &Waveform,
    opts: &EnhanceOptions,
) -> Result<EnhanceOutput> {
    check_model_config(model, noisy)?;
    let f = &model.feature;
    if noisy.len() < f.frame_len {
        return Err(Error::TooShort {
            needed: f.frame_len,
            got: noisy.len(),
        });
    }

    let noisy_stft = stft(noisy, f.frame_len, f.hop, f.window)?;
    let noisy_log = log_spectrum(&noisy_stft);

    // Feature path: CMVN-normalized, context-stacked.
    let expert_frames = CmvnStats::fit(&noisy_log.frames)?.apply_all(&noisy_log.frames);
    let expert_stacked = stack_context(&expert_frames, f.context);
    let gate_stacked = if model.shared_gate_input {
        expert_stacked.clone()
    } else {
        let gate_feats = mfcc(&noisy_stft, f.num_mel_filters, f.num_ceps)?;
        let gate_frames = CmvnStats::fit(&gate_feats.frames)?.apply_all(&gate_feats.frames);
        stack_context(&gate_frames, f.context)
    };

    // Attenuation path: raw log-magnitudes.
    let mut spp_track = Vec::with_capacity(noisy_log.num_frames());
    let mut enhanced_log = Vec::with_capacity(noisy_log.num_frames());
    for t in 0..noisy_log.num_frames() {
        let spp = final_spp(&model.params, &expert_stacked[t], &gate_stacked[t])?;
        enhanced_log.push(soft_attenuate(&noisy_log.frames[t], &spp, &opts.config)?);
        spp_track.push(spp);
    }

    let enhanced = reconstruct(&enhanced_log, &noisy_stft, noisy.len(), opts.peak_normalize)?;
    Ok(EnhanceOutput {
        enhanced,
        spp_track,
    })
}

/// Enhancement with the oracle mask: mixes `clean` and `noise` per `spec`,
/// applies the true max-approximation mask with the same attenuation rule,
/// and reconstructs with the noisy phase. The performance upper bound for
/// any SPP estimator under this rule.
///
/// Returns `(noisy, enhanced)` so gains can be measured on the same mixture.
pub fn oracle_enhance(
    clean: &Waveform,
    noise: &Waveform,
    spec: &MixSpec,
    cfg: &EnhanceConfig,
    feature: &FeatureConfig,
) -> Result<(Waveform, Waveform)> {
    feature.validate()?;
    if clean.len() < feature.frame_len {
        return Err(Error::TooShort {
            needed: feature.frame_len,
            got: clean.len(),
        });
    }
    let (noisy, scaled_noise) = mix_at_snr(clean, noise, spec.snr_db, spec.seed)?;

    let noisy_stft = stft(&noisy, feature.frame_len, feature.hop, feature.window)?;
    let clean_log = log_spectrum(&stft(clean, feature.frame_len, feature.hop, feature.window)?);
    let noise_log = log_spectrum(&stft(
        &scaled_noise,
        feature.frame_len,
        feature.hop,
        feature.window,
    )?);
    let noisy_log = log_spectrum(&noisy_stft);

    let mut enhanced_log = Vec::with_capacity(noisy_log.num_frames());
    for t in 0..noisy_log.num_frames() {
        let mask = max_mask(&clean_log.frames[t], &noise_log.frames[t])?;
        enhanced_log.push(hard_mask_apply(&noisy_log.frames[t], &mask, cfg)?);
    }

    let enhanced = reconstruct(&enhanced_log, &noisy_stft, noisy.len(), true)?;
    Ok((noisy, enhanced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::white_noise;
    use crate::dmoe::DmoeArch;
    use crate::eval::segmental_snr;
    use crate::rng;

    fn desk_feature() -> FeatureConfig {
        let mut f = FeatureConfig::desk_scale();
        f.context = 1;
        f
    }

    fn untrained_model(feature: &FeatureConfig, m: usize, seed: u64) -> DmoeModel {
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

    fn saturate_experts(model: &mut DmoeModel, bias: f64) {
        for expert in &mut model.params.experts {
            let last = expert.layers.last_mut().unwrap();
            for w in last.weights.iter_mut() {
                *w = 0.0;
            }
            for b in last.bias.iter_mut() {
                *b = bias;
            }
        }
    }

    fn test_utterance(feature: &FeatureConfig, seed: u64) -> Waveform {
        let mut r = rng::stream(seed, "enh-test", &[]);
        let n = feature.sample_rate as usize / 2;
        Waveform::new(
            (0..n)
                .map(|i| {
                    0.3 * (std::f64::consts::TAU * 220.0 * i as f64
                        / f64::from(feature.sample_rate))
                    .sin()
                        + 0.05 * rng::gaussian(&mut r)
                })
                .collect(),
            feature.sample_rate,
        )
        .unwrap()
    }

    #[test]
    fn saturated_high_model_is_an_identity() {
        let feature = desk_feature();
        let mut model = untrained_model(&feature, 2, 1);
        saturate_experts(&mut model, 40.0);
        let noisy = test_utterance(&feature, 2);
        let out = enhance_utterance(&model, &noisy, &EnhanceOptions::default()).unwrap();
        assert_eq!(out.enhanced.len(), noisy.len());
        // Interior samples match within the analysis round-trip tolerance.
        let covered = (out.spp_track.len() - 1) * feature.hop + feature.frame_len;
        for i in 0..covered {
            assert!(
                (out.enhanced.samples[i] - noisy.samples[i]).abs() < 1e-6,
                "sample {i}"
            );
        }
        assert!(out
            .spp_track
            .iter()
            .all(|s| s.probs().iter().all(|p| *p > 1.0 - 1e-12)));
    }

    #[test]
    fn saturated_low_model_attenuates_by_beta() {
        let feature = desk_feature();
        let mut model = untrained_model(&feature, 2, 3);
        saturate_experts(&mut model, -40.0);
        let noisy = test_utterance(&feature, 4);
        let beta = 1.1513;
        let opts = EnhanceOptions {
            config: EnhanceConfig::new(beta).unwrap(),
            peak_normalize: false,
        };
        let out = enhance_utterance(&model, &noisy, &opts).unwrap();
        // ρ≡0 shifts every log-magnitude by −β: the waveform shrinks by
        // exp(−β) on the covered interior.
        let g = (-beta).exp();
        let covered = (out.spp_track.len() - 1) * feature.hop + feature.frame_len;
        for i in 0..covered {
            assert!(
                (out.enhanced.samples[i] - g * noisy.samples[i]).abs() < 1e-6,
                "sample {i}: {} vs {}",
                out.enhanced.samples[i],
                g * noisy.samples[i]
            );
        }
    }

    #[test]
    fn spp_track_matches_frame_count_and_range() {
        let feature = desk_feature();
        let model = untrained_model(&feature, 3, 5);
        let noisy = test_utterance(&feature, 6);
        let out = enhance_utterance(&model, &noisy, &EnhanceOptions::default()).unwrap();
        let frames = crate::signal::frame_count(noisy.len(), feature.frame_len, feature.hop);
        assert_eq!(out.spp_track.len(), frames);
        for s in &out.spp_track {
            assert!(s.probs().iter().all(|p| (0.0..=1.0).contains(p)));
        }
        assert!(out.enhanced.samples.iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn config_mismatches_name_the_field() {
        let feature = desk_feature();
        let model = untrained_model(&feature, 2, 7);
        let wrong_rate = Waveform::new(vec![0.1; 4000], 44_100).unwrap();
        match enhance_utterance(&model, &wrong_rate, &EnhanceOptions::default()) {
            Err(Error::ConfigMismatch { field, .. }) => assert_eq!(field, "sample_rate"),
            other => panic!("expected ConfigMismatch, got {other:?}"),
        }

        let mut broken = untrained_model(&feature, 2, 8);
        broken.feature.context = 3;
        let noisy = test_utterance(&feature, 9);
        match enhance_utterance(&broken, &noisy, &EnhanceOptions::default()) {
            Err(Error::ConfigMismatch { field, .. }) => assert_eq!(field, "expert_input_dim"),
            other => panic!("expected ConfigMismatch, got {other:?}"),
        }
    }

    #[test]
    fn oracle_with_zero_beta_returns_noisy() {
        let feature = desk_feature();
        let clean = test_utterance(&feature, 10);
        let noise = white_noise(clean.len(), feature.sample_rate, 11);
        let spec = MixSpec::new(5.0, "white", 12).unwrap();
        let cfg = EnhanceConfig::new(0.0).unwrap();
        let (noisy, enhanced) = oracle_enhance(&clean, &noise, &spec, &cfg, &feature).unwrap();
        let covered =
            (crate::signal::frame_count(noisy.len(), feature.frame_len, feature.hop) - 1)
                * feature.hop
                + feature.frame_len;
        for i in 0..covered {
            assert!((enhanced.samples[i] - noisy.samples[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_at_extreme_snr_tracks_clean() {
        let feature = desk_feature();
        let clean = test_utterance(&feature, 13);
        let noise = white_noise(clean.len(), feature.sample_rate, 14);
        let spec = MixSpec::new(200.0, "white", 15).unwrap();
        let (_, enhanced) = oracle_enhance(
            &clean,
            &noise,
            &spec,
            &EnhanceConfig::default(),
            &feature,
        )
        .unwrap();
        let ssnr = segmental_snr(&clean, &enhanced).unwrap();
        assert!(ssnr > 30.0, "ssnr {ssnr}");
    }

    #[test]
    fn oracle_improves_a_noisy_mixture() {
        let feature = desk_feature();
        let clean = test_utterance(&feature, 16);
        let noise = white_noise(clean.len() * 2, feature.sample_rate, 17);
        let spec = MixSpec::new(5.0, "white", 18).unwrap();
        let (noisy, enhanced) = oracle_enhance(
            &clean,
            &noise,
            &spec,
            &EnhanceConfig::default(),
            &feature,
        )
        .unwrap();
        let before = segmental_snr(&clean, &noisy).unwrap();
        let after = segmental_snr(&clean, &enhanced).unwrap();
        assert!(
            after > before,
            "oracle enhancement did not help: {before} → {after}"
        );
    }
}
