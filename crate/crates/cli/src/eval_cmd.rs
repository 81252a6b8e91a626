//! `dmoe eval`: mix clean WAVs with noise over a list of SNRs, enhance,
//! and score against the references.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use dmoe_core::dataset::{mix_at_snr, MixSpec};
use dmoe_core::dmoe::load_model;
use dmoe_core::enhance::{enhance_utterance, EnhanceOptions};
use dmoe_core::eval::{log_spectral_distortion, mask_metrics, segmental_snr, EvalReport, UtteranceEval};
use dmoe_core::mask::{max_mask, BinaryMask, EnhanceConfig};
use dmoe_core::rng;
use dmoe_core::signal::{log_spectrum, stft};

use crate::common;

#[derive(Args)]
pub struct EvalArgs {
    /// Trained model checkpoint.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,

    /// Directory of clean WAV files.
    #[arg(long, value_name = "DIR")]
    clean_dir: PathBuf,

    /// Noise WAV file.
    #[arg(long, value_name = "FILE")]
    noise_file: PathBuf,

    /// Comma-separated SNR levels in dB.
    #[arg(long, value_name = "LIST", default_value = "-5,0,5,10,15")]
    snr_list: String,

    /// Output JSON report.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Also write a per-SNR CSV next to the report.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,

    /// Attenuation level in natural-log units.
    #[arg(long)]
    beta: Option<f64>,

    /// Root random seed (noise segment selection).
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Linearly resample WAV inputs to the model's rate if needed.
    #[arg(long)]
    resample: bool,

    /// JSON config file (flags take precedence).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let file_cfg = common::load_file_config(args.config.as_deref())?;
    let model = load_model(&args.model)?;
    let beta = common::resolve(args.beta, file_cfg.beta, EnhanceConfig::default().beta);
    let snrs: Vec<f64> = common::parse_list(&args.snr_list)?;
    let feature = model.feature.clone();

    let mut manifest = common::RunManifest::new(
        "eval",
        args.seed,
        serde_json::json!({
            "snr_list": snrs,
            "beta": beta,
            "feature": feature,
        }),
    );
    manifest.record_input(&args.model)?;
    manifest.record_input(&args.noise_file)?;

    let noise = common::load_wav(&args.noise_file, feature.sample_rate, args.resample)?;
    let clean_files = common::wav_files(&args.clean_dir)?;
    let cleans: Vec<_> = clean_files
        .iter()
        .map(|p| {
            manifest.record_input(p)?;
            common::load_wav(p, feature.sample_rate, args.resample)
        })
        .collect::<Result<_>>()?;

    let opts = EnhanceOptions {
        config: EnhanceConfig::new(beta)?,
        peak_normalize: true,
    };

    let mut per_snr: Vec<(f64, EvalReport)> = Vec::new();
    for (si, &snr) in snrs.iter().enumerate() {
        let mut utterances = Vec::new();
        let mut predicted = Vec::new();
        let mut truth: Vec<BinaryMask> = Vec::new();
        let mut ssnr_sum = 0.0;
        let mut lsd_sum = 0.0;

        for (u, clean) in cleans.iter().enumerate() {
            let seed = rng::child_seed(args.seed, "eval-mix", &[si as u64, u as u64]);
            let spec = MixSpec::new(snr, "file", seed)?;
            let (noisy, scaled_noise) = mix_at_snr(clean, &noise, spec.snr_db, spec.seed)
                .with_context(|| format!("mixing {}", clean_files[u].display()))?;
            let out = enhance_utterance(&model, &noisy, &opts)?;

            // Oracle labels from the same framing for mask metrics.
            let clean_log =
                log_spectrum(&stft(clean, feature.frame_len, feature.hop, feature.window)?);
            let noise_log = log_spectrum(&stft(
                &scaled_noise,
                feature.frame_len,
                feature.hop,
                feature.window,
            )?);
            let mut utt_truth = Vec::with_capacity(clean_log.num_frames());
            for t in 0..clean_log.num_frames() {
                utt_truth.push(max_mask(&clean_log.frames[t], &noise_log.frames[t])?);
            }
            let (utt_acc, _) = mask_metrics(&out.spp_track, &utt_truth)?;

            let ssnr_noisy = segmental_snr(clean, &noisy)?;
            let ssnr_enhanced = segmental_snr(clean, &out.enhanced)?;
            let enhanced_log = log_spectrum(&stft(
                &out.enhanced,
                feature.frame_len,
                feature.hop,
                feature.window,
            )?);
            lsd_sum += log_spectral_distortion(&clean_log, &enhanced_log)?;
            ssnr_sum += ssnr_enhanced;

            utterances.push(UtteranceEval {
                index: u,
                ssnr_noisy_db: Some(ssnr_noisy),
                ssnr_enhanced_db: Some(ssnr_enhanced),
                mask_accuracy: utt_acc,
            });
            predicted.extend(out.spp_track);
            truth.extend(utt_truth);
        }

        let (mask_accuracy, mask_auc) = mask_metrics(&predicted, &truth)?;
        let n = cleans.len() as f64;
        per_snr.push((
            snr,
            EvalReport {
                ssnr_db: Some(ssnr_sum / n),
                mask_accuracy,
                mask_auc,
                lsd: Some(lsd_sum / n),
                utterances,
            },
        ));
        eprintln!(
            "snr {snr:>5.1} dB: ssnr {:.2} dB, mask accuracy {:.4}, auc {:.4}",
            ssnr_sum / n,
            mask_accuracy,
            mask_auc
        );
    }

    let report = serde_json::json!({
        "model": args.model.display().to_string(),
        "beta": beta,
        "per_snr": per_snr
            .iter()
            .map(|(snr, r)| serde_json::json!({"snr_db": snr, "report": r}))
            .collect::<Vec<_>>(),
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    manifest.record_output(&args.out);

    if let Some(csv_path) = &args.csv {
        let mut csv = String::from("snr_db,ssnr_db,mask_accuracy,mask_auc,lsd\n");
        for (snr, r) in &per_snr {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                snr,
                r.ssnr_db.unwrap_or(f64::NAN),
                r.mask_accuracy,
                r.mask_auc,
                r.lsd.unwrap_or(f64::NAN)
            ));
        }
        std::fs::write(csv_path, csv)?;
        manifest.record_output(csv_path);
    }
    manifest.write_beside(&args.out)?;

    println!("report written to {}", args.out.display());
    Ok(())
}
