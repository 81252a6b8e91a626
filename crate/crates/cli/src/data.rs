//! `dmoe make-data`: corpus construction.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use dmoe_core::dataset::{
    build_pairs, build_synth_corpus, save_corpus, Corpus, CorpusUtterance, MixSpec,
    UtteranceAudio,
};
use dmoe_core::rng;

use crate::common;

#[derive(Args)]
pub struct MakeDataArgs {
    /// Directory of clean 16-bit PCM mono WAV files.
    #[arg(long, value_name = "DIR")]
    clean_dir: Option<PathBuf>,

    /// Noise WAV file (must be at least as long as each clean file).
    #[arg(long, value_name = "FILE")]
    noise_file: Option<PathBuf>,

    /// Target SNR in dB.
    #[arg(long, default_value_t = 5.0)]
    snr: f64,

    /// Output stem: writes <out>.f32 and <out>.json.
    #[arg(long, value_name = "STEM")]
    out: PathBuf,

    /// Context frames per side.
    #[arg(long)]
    context: Option<usize>,

    /// Generate N synthetic two-regime utterances instead of reading WAVs.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,

    /// Root random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// JSON config file (flags take precedence).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Linearly resample WAV inputs that do not match the pipeline rate.
    #[arg(long)]
    resample: bool,
}

pub fn run(args: MakeDataArgs) -> Result<()> {
    let file_cfg = common::load_file_config(args.config.as_deref())?;
    // Synthetic corpora default to the desk-scale analysis configuration.
    let feature = common::resolve_feature(&file_cfg.feature, args.context, args.synthetic.is_some());
    feature.validate()?;

    let mut manifest = common::RunManifest::new(
        "make-data",
        args.seed,
        serde_json::json!({
            "feature": feature,
            "snr_db": args.snr,
            "synthetic": args.synthetic,
        }),
    );

    let (corpus, provenance) = match args.synthetic {
        Some(n) => {
            if n == 0 {
                bail!("--synthetic needs at least one utterance");
            }
            let corpus = build_synth_corpus(n, args.snr, args.seed, &feature)?;
            let provenance = serde_json::json!({
                "mode": "synthetic",
                "num_utterances": n,
                "snr_db": args.snr,
                "seed": args.seed,
                "noise_kind": "white",
            });
            (corpus, provenance)
        }
        None => {
            let clean_dir = args
                .clean_dir
                .as_deref()
                .context("--clean-dir is required unless --synthetic is used")?;
            let noise_file = args
                .noise_file
                .as_deref()
                .context("--noise-file is required unless --synthetic is used")?;
            let noise = common::load_wav(noise_file, feature.sample_rate, args.resample)?;
            manifest.record_input(noise_file)?;

            let mut utterances = Vec::new();
            let mut sources = Vec::new();
            for (u, path) in common::wav_files(clean_dir)?.iter().enumerate() {
                let clean = common::load_wav(path, feature.sample_rate, args.resample)?;
                manifest.record_input(path)?;
                let spec = MixSpec::new(
                    args.snr,
                    "file",
                    rng::child_seed(args.seed, "mix", &[u as u64]),
                )?;
                let (pairs, noisy) = build_pairs(&clean, &noise, &spec, &feature)
                    .with_context(|| format!("building features for {}", path.display()))?;
                utterances.push(CorpusUtterance {
                    pairs,
                    audio: Some(UtteranceAudio { clean, noisy }),
                });
                sources.push(path.display().to_string());
            }
            let provenance = serde_json::json!({
                "mode": "wav",
                "clean_files": sources,
                "noise_file": noise_file.display().to_string(),
                "snr_db": args.snr,
                "seed": args.seed,
            });
            (
                Corpus {
                    feature: feature.clone(),
                    utterances,
                },
                provenance,
            )
        }
    };

    save_corpus(&corpus, &args.out, provenance)?;
    manifest.record_output(&args.out.with_extension("f32"));
    manifest.record_output(&args.out.with_extension("json"));
    manifest.write_beside(&args.out)?;

    println!(
        "wrote {} frames over {} utterances to {}.f32",
        corpus.num_frames(),
        corpus.utterances.len(),
        args.out.display()
    );
    Ok(())
}
