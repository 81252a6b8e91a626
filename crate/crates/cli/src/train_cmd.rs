//! `dmoe train`: joint or EM training from a saved corpus.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};

use dmoe_core::dataset::load_corpus;
use dmoe_core::dmoe::{
    save_model, train_em_observed, train_joint_observed, DmoeModel, TrainConfig,
};

use crate::common;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Trainer {
    Joint,
    Em,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training procedure.
    #[arg(long, value_enum, default_value_t = Trainer::Joint)]
    trainer: Trainer,

    /// Number of experts (m).
    #[arg(long)]
    experts: Option<usize>,

    /// Corpus stem written by make-data (reads <stem>.f32 / <stem>.json).
    #[arg(long, value_name = "STEM")]
    corpus: PathBuf,

    /// Output model checkpoint.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Root random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Epochs (joint) or EM iterations (em).
    #[arg(long)]
    epochs: Option<usize>,

    /// Minibatch size.
    #[arg(long)]
    batch: Option<usize>,

    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,

    /// Dropout rate on hidden layers.
    #[arg(long)]
    dropout: Option<f64>,

    /// Hidden layer widths, e.g. 64,64,64.
    #[arg(long, value_name = "LIST")]
    hidden: Option<String>,

    /// Minibatch passes per M-step (EM only).
    #[arg(long)]
    inner_epochs: Option<usize>,

    /// Feed the gate the expert input instead of MFCCs (ablation).
    #[arg(long)]
    shared_gate_input: bool,

    /// Where to write the training report (default: <out>.report.json).
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,

    /// JSON config file (flags take precedence).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let file_cfg = common::load_file_config(args.config.as_deref())?;
    let corpus = load_corpus(&args.corpus)?;

    let defaults = TrainConfig::default();
    let hidden = match &args.hidden {
        Some(list) => common::parse_list::<usize>(list)?,
        None => file_cfg.train.hidden.clone().unwrap_or(defaults.hidden.clone()),
    };
    let cfg = TrainConfig {
        num_experts: common::resolve(args.experts, file_cfg.train.experts, defaults.num_experts),
        hidden,
        learning_rate: common::resolve(
            args.lr,
            file_cfg.train.learning_rate,
            defaults.learning_rate,
        ),
        epochs: common::resolve(args.epochs, file_cfg.train.epochs, defaults.epochs),
        batch_size: common::resolve(args.batch, file_cfg.train.batch_size, defaults.batch_size),
        dropout: common::resolve(args.dropout, file_cfg.train.dropout, defaults.dropout),
        seed: args.seed,
        shared_gate_input: args.shared_gate_input,
        em_inner_epochs: common::resolve(
            args.inner_epochs,
            file_cfg.train.em_inner_epochs,
            defaults.em_inner_epochs,
        ),
    };
    cfg.validate()?;

    let mut manifest = common::RunManifest::new(
        "train",
        args.seed,
        serde_json::json!({
            "trainer": match args.trainer { Trainer::Joint => "joint", Trainer::Em => "em" },
            "train": cfg,
            "feature": corpus.feature,
        }),
    );
    manifest.record_input(&args.corpus.with_extension("f32"))?;
    manifest.record_input(&args.corpus.with_extension("json"))?;

    eprintln!(
        "training ({}) on {} frames: m={}, hidden {:?}, {} epochs",
        match args.trainer {
            Trainer::Joint => "joint",
            Trainer::Em => "em",
        },
        corpus.num_frames(),
        cfg.num_experts,
        cfg.hidden,
        cfg.epochs
    );
    let mut observer = |row: &dmoe_core::dmoe::TrainRow| {
        eprintln!("  {:>4}: mean log-likelihood {:.6}", row.index, row.mean_loglik);
    };
    let (params, report) = match args.trainer {
        Trainer::Joint => train_joint_observed(&corpus, &cfg, &mut observer)?,
        Trainer::Em => train_em_observed(&corpus, &cfg, &mut observer)?,
    };
    if let Some(at) = report.diverged_at {
        eprintln!("warning: training diverged at {at}; keeping the last good checkpoint");
    }

    let model = DmoeModel {
        params,
        feature: corpus.feature.clone(),
        shared_gate_input: cfg.shared_gate_input,
    };
    save_model(&model, &args.out)?;
    manifest.record_output(&args.out);

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| report_default_path(&args.out));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    manifest.record_output(&report_path);
    manifest.write_beside(&args.out)?;

    if report.rows.is_empty() && report.diverged_at.is_some() {
        bail!("training diverged before completing a single epoch");
    }
    println!(
        "model written to {} (mean log-likelihood {:.6} -> {:.6})",
        args.out.display(),
        report.initial_mean_loglik,
        report.final_mean_loglik()
    );
    Ok(())
}

fn report_default_path(out: &std::path::Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    out.with_file_name(name)
}
