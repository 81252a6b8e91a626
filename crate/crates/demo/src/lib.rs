//! Browser demo: generate a two-regime mixture, train a small mixture of
//! experts in-page, and explore SPP-driven enhancement interactively.
//!
//! The exported surface is deliberately plain — flat typed arrays and JSON
//! strings — so the static page needs no framework. Everything is seeded
//! and deterministic; no OS entropy is used, which keeps the crate happy
//! on `wasm32-unknown-unknown`.

use wasm_bindgen::prelude::wasm_bindgen;

use dmoe_core::analysis::gating_stats;
use dmoe_core::dataset::{build_synth_corpus, mix_at_snr, white_noise, Corpus};
use dmoe_core::dmoe::{train_joint, DmoeModel, TrainConfig};
use dmoe_core::enhance::{enhance_utterance, EnhanceOptions, EnhanceOutput};
use dmoe_core::mask::EnhanceConfig;
use dmoe_core::rng;
use dmoe_core::signal::{log_spectrum, stft, wav_bytes, LogSpectrum, Waveform};
use dmoe_core::FeatureConfig;

fn demo_feature() -> FeatureConfig {
    let mut f = FeatureConfig::desk_scale();
    // Narrower context keeps in-browser training responsive.
    f.context = 2;
    f
}

fn err_str(e: dmoe_core::Error) -> String {
    e.to_string()
}

/// One interactive session: a small training corpus, a held-out demo
/// mixture, and (after `train`) a model to explore.
#[wasm_bindgen]
pub struct DemoSession {
    feature: FeatureConfig,
    seed: u64,
    train_corpus: Corpus,
    demo_clean: Waveform,
    demo_tags: Vec<u32>,
    demo_noisy: Waveform,
    snr_db: f64,
    model: Option<DmoeModel>,
    last_enhanced: Option<EnhanceOutput>,
}

#[wasm_bindgen]
impl DemoSession {
    /// Build the session corpora at the given seed and a 5 dB demo mixture.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<DemoSession, String> {
        let feature = demo_feature();
        let seed = u64::from(seed);
        let train_corpus =
            build_synth_corpus(12, 5.0, rng::child_seed(seed, "demo-train", &[]), &feature)
                .map_err(err_str)?;
        let held_out = dmoe_core::dataset::synth_corpus(
            1,
            rng::child_seed(seed, "demo-heldout", &[]),
            &feature,
        )
        .pop()
        .expect("generator returned no utterance");

        let mut session = DemoSession {
            feature,
            seed,
            train_corpus,
            demo_clean: held_out.clean,
            demo_tags: held_out.regime_tags,
            demo_noisy: Waveform {
                samples: Vec::new(),
                sample_rate: 0,
            },
            snr_db: 5.0,
            model: None,
            last_enhanced: None,
        };
        session.set_snr(5.0)?;
        Ok(session)
    }

    /// Remix the demo utterance at a new SNR (dB).
    pub fn set_snr(&mut self, snr_db: f64) -> Result<(), String> {
        let noise = white_noise(
            self.demo_clean.len(),
            self.feature.sample_rate,
            rng::child_seed(self.seed, "demo-noise", &[]),
        );
        let (noisy, _) = mix_at_snr(&self.demo_clean, &noise, snr_db, self.seed).map_err(err_str)?;
        self.demo_noisy = noisy;
        self.snr_db = snr_db;
        self.last_enhanced = None;
        Ok(())
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn sample_rate(&self) -> u32 {
        self.feature.sample_rate
    }

    pub fn frame_count(&self) -> usize {
        dmoe_core::signal::frame_count(self.demo_noisy.len(), self.feature.frame_len, self.feature.hop)
    }

    pub fn bin_count(&self) -> usize {
        self.feature.num_bins()
    }

    fn spectrum_of(&self, w: &Waveform) -> Result<LogSpectrum, String> {
        let s = stft(w, self.feature.frame_len, self.feature.hop, self.feature.window)
            .map_err(err_str)?;
        Ok(log_spectrum(&s))
    }

    /// Row-major `frame_count × bin_count` log-magnitudes of "clean",
    /// "noisy", or "enhanced" (the latter requires a prior `enhance`).
    pub fn spectrogram(&self, which: &str) -> Result<Vec<f32>, String> {
        let spec = match which {
            "clean" => self.spectrum_of(&self.demo_clean)?,
            "noisy" => self.spectrum_of(&self.demo_noisy)?,
            "enhanced" => {
                let out = self
                    .last_enhanced
                    .as_ref()
                    .ok_or("no enhanced signal yet; call enhance() first")?;
                self.spectrum_of(&out.enhanced)?
            }
            other => return Err(format!("unknown spectrogram {other:?}")),
        };
        Ok(spec
            .frames
            .iter()
            .flat_map(|f| f.iter().map(|v| *v as f32))
            .collect())
    }

    /// Train a mixture with `num_experts` experts for `epochs` epochs on
    /// the session corpus. Returns `[initial, epoch1, epoch2, …]` mean
    /// log-likelihoods.
    pub fn train(&mut self, num_experts: usize, epochs: usize) -> Result<Vec<f64>, String> {
        let cfg = TrainConfig {
            num_experts,
            hidden: vec![32, 32],
            learning_rate: 1e-3,
            epochs,
            batch_size: 128,
            dropout: 0.1,
            seed: rng::child_seed(self.seed, "demo-model", &[num_experts as u64]),
            shared_gate_input: false,
            em_inner_epochs: 3,
        };
        let (params, report) = train_joint(&self.train_corpus, &cfg).map_err(err_str)?;
        self.model = Some(DmoeModel {
            params,
            feature: self.feature.clone(),
            shared_gate_input: false,
        });
        self.last_enhanced = None;
        let mut trace = vec![report.initial_mean_loglik];
        trace.extend(report.rows.iter().map(|r| r.mean_loglik));
        Ok(trace)
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }

    /// Enhance the demo mixture at the given attenuation level
    /// (natural-log units). Stores the result for `spectrogram` /
    /// `spp_grid` / `enhanced_wav`.
    pub fn enhance(&mut self, beta: f64) -> Result<(), String> {
        let model = self.model.as_ref().ok_or("train a model first")?;
        let opts = EnhanceOptions {
            config: EnhanceConfig::new(beta).map_err(err_str)?,
            peak_normalize: true,
        };
        let out = enhance_utterance(model, &self.demo_noisy, &opts).map_err(err_str)?;
        self.last_enhanced = Some(out);
        Ok(())
    }

    /// Row-major `frame_count × bin_count` final SPP of the last `enhance`.
    pub fn spp_grid(&self) -> Result<Vec<f32>, String> {
        let out = self
            .last_enhanced
            .as_ref()
            .ok_or("no enhanced signal yet; call enhance() first")?;
        Ok(out
            .spp_track
            .iter()
            .flat_map(|s| s.probs().iter().map(|v| *v as f32))
            .collect())
    }

    /// Per-regime gate usage of the trained model on the training corpus,
    /// as JSON.
    pub fn gating_json(&self) -> Result<String, String> {
        let model = self.model.as_ref().ok_or("train a model first")?;
        let stats = gating_stats(model, self.train_corpus.pairs()).map_err(err_str)?;
        serde_json::to_string(&stats).map_err(|e| e.to_string())
    }

    /// Regime tag (0 = harmonic, 1 = noise burst) per demo frame.
    pub fn regime_track(&self) -> Vec<u32> {
        self.demo_tags.clone()
    }

    pub fn clean_wav(&self) -> Result<Vec<u8>, String> {
        wav_bytes(&self.demo_clean).map_err(err_str)
    }

    pub fn noisy_wav(&self) -> Result<Vec<u8>, String> {
        wav_bytes(&self.demo_noisy).map_err(err_str)
    }

    pub fn enhanced_wav(&self) -> Result<Vec<u8>, String> {
        let out = self
            .last_enhanced
            .as_ref()
            .ok_or("no enhanced signal yet; call enhance() first")?;
        wav_bytes(&out.enhanced).map_err(err_str)
    }
}
