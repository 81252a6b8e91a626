//! `dmoe enhance`: WAV in → SPP-weighted attenuation → WAV out.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use dmoe_core::dmoe::load_model;
use dmoe_core::enhance::{enhance_utterance, EnhanceOptions};
use dmoe_core::mask::EnhanceConfig;
use dmoe_core::signal::write_wav_mono;

use crate::common;

#[derive(Args)]
pub struct EnhanceArgs {
    /// Trained model checkpoint.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,

    /// Noisy input WAV (16-bit PCM mono).
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,

    /// Enhanced output WAV.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Attenuation level in natural-log units (default ≈ 10 dB).
    #[arg(long)]
    beta: Option<f64>,

    /// Dump the per-frame SPP matrix (f32 little-endian + JSON sidecar).
    #[arg(long, value_name = "PATH")]
    dump_spp: Option<PathBuf>,

    /// Keep the raw output even if it clips.
    #[arg(long)]
    no_peak_norm: bool,

    /// Linearly resample the input to the model's rate if needed.
    #[arg(long)]
    resample: bool,

    /// JSON config file (flags take precedence).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn run(args: EnhanceArgs) -> Result<()> {
    let file_cfg = common::load_file_config(args.config.as_deref())?;
    let model = load_model(&args.model)?;
    let beta = common::resolve(args.beta, file_cfg.beta, EnhanceConfig::default().beta);

    let noisy = common::load_wav(&args.input, model.feature.sample_rate, args.resample)?;

    let opts = EnhanceOptions {
        config: EnhanceConfig::new(beta)?,
        peak_normalize: !args.no_peak_norm,
    };
    let out = enhance_utterance(&model, &noisy, &opts)?;
    write_wav_mono(&args.out, &out.enhanced)?;

    let mut manifest = common::RunManifest::new(
        "enhance",
        0,
        serde_json::json!({
            "beta": beta,
            "peak_normalize": !args.no_peak_norm,
            "feature": model.feature,
        }),
    );
    manifest.record_input(&args.model)?;
    manifest.record_input(&args.input)?;
    manifest.record_output(&args.out);

    if let Some(spp_path) = &args.dump_spp {
        let frames = out.spp_track.len();
        let bins = out.spp_track.first().map_or(0, |s| s.len());
        common::write_f32_matrix(
            spp_path,
            frames,
            bins,
            out.spp_track.iter().flat_map(|s| s.probs().iter().copied()),
        )?;
        manifest.record_output(spp_path);
    }
    manifest.write_beside(&args.out)?;

    println!(
        "enhanced {} ({} frames) -> {}",
        args.input.display(),
        out.spp_track.len(),
        args.out.display()
    );
    Ok(())
}
