//! `dmoe analyze`: gating statistics, expert probes, and expert sweeps.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};

use dmoe_core::analysis::{evaluate_on_corpus, expert_probe, gating_stats, SweepRow};
use dmoe_core::dataset::{load_corpus, Corpus};
use dmoe_core::dmoe::{load_model, train_joint, DmoeModel, TrainConfig};

use crate::common;

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Per-regime gate usage of a trained model (requires regime tags).
    Gating(GatingArgs),
    /// Per-frame SPP with all-ones expert input (expert templates).
    Probe(ProbeArgs),
    /// Train and evaluate models over a list of expert counts.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct GatingArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Corpus stem (reads <stem>.f32 / <stem>.json).
    #[arg(long, value_name = "STEM")]
    corpus: PathBuf,
    /// Output JSON (a CSV of the soft means is written next to it).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "STEM")]
    corpus: PathBuf,
    /// Output stem for the f32 grid + JSON sidecar.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Training corpus stem.
    #[arg(long, value_name = "STEM")]
    corpus: PathBuf,
    /// Held-out corpus stem; defaults to evaluating on the training corpus.
    #[arg(long, value_name = "STEM")]
    eval_corpus: Option<PathBuf>,
    /// Comma-separated expert counts, e.g. 1,2,4.
    #[arg(long, value_name = "LIST", default_value = "1,2")]
    m_list: String,
    /// Output JSON (a CSV table is written next to it).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Train the models concurrently (capped by DMOE_THREADS).
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Hidden layer widths, e.g. 64,64,64.
    #[arg(long, value_name = "LIST")]
    hidden: Option<String>,
    /// JSON config file (flags take precedence).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

pub fn run(cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Gating(args) => run_gating(args),
        AnalyzeCommand::Probe(args) => run_probe(args),
        AnalyzeCommand::Sweep(args) => run_sweep(args),
    }
}

fn run_gating(args: GatingArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let corpus = load_corpus(&args.corpus)?;
    let stats = gating_stats(&model, corpus.pairs())?;

    std::fs::write(&args.out, serde_json::to_string_pretty(&stats)?)?;
    let csv_path = args.out.with_extension("csv");
    let mut csv = String::from("regime,frames");
    for i in 0..model.params.num_experts() {
        csv.push_str(&format!(",mean_gate_{i},hard_fraction_{i}"));
    }
    csv.push('\n');
    for row in &stats.regimes {
        csv.push_str(&format!("{},{}", row.regime, row.frames));
        for i in 0..model.params.num_experts() {
            csv.push_str(&format!(",{},{}", row.mean_gate[i], row.hard_fraction[i]));
        }
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv)?;

    let mut manifest = common::RunManifest::new("analyze-gating", 0, serde_json::json!({}));
    manifest.record_input(&args.model)?;
    manifest.record_input(&args.corpus.with_extension("f32"))?;
    manifest.record_output(&args.out);
    manifest.record_output(&csv_path);
    manifest.write_beside(&args.out)?;

    for row in &stats.regimes {
        println!(
            "regime {}: {} frames, majority expert {} ({:.1}% hard)",
            row.regime,
            row.frames,
            row.majority_expert(),
            100.0 * row.majority_fraction()
        );
    }
    println!("routing entropy {:.3} nats", stats.routing_entropy);
    Ok(())
}

fn run_probe(args: ProbeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let corpus = load_corpus(&args.corpus)?;
    let probe = expert_probe(&model, corpus.pairs())?;
    let rows = probe.len();
    let cols = probe.first().map_or(0, |s| s.len());
    common::write_f32_matrix(
        &args.out,
        rows,
        cols,
        probe.iter().flat_map(|s| s.probs().iter().copied()),
    )?;

    let mut manifest = common::RunManifest::new("analyze-probe", 0, serde_json::json!({}));
    manifest.record_input(&args.model)?;
    manifest.record_input(&args.corpus.with_extension("f32"))?;
    manifest.record_output(&args.out);
    manifest.write_beside(&args.out)?;

    println!("probe grid {rows}×{cols} written to {}", args.out.display());
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let file_cfg = common::load_file_config(args.config.as_deref())?;
    let train = load_corpus(&args.corpus)?;
    let eval: Corpus = match &args.eval_corpus {
        Some(stem) => load_corpus(stem)?,
        None => train.clone(),
    };
    let m_list: Vec<usize> = common::parse_list(&args.m_list)?;
    if m_list.is_empty() {
        bail!("--m-list must name at least one expert count");
    }

    let defaults = TrainConfig::default();
    let hidden = match &args.hidden {
        Some(list) => common::parse_list::<usize>(list)?,
        None => file_cfg.train.hidden.clone().unwrap_or(defaults.hidden.clone()),
    };
    let base = TrainConfig {
        num_experts: 1,
        hidden,
        learning_rate: common::resolve(args.lr, file_cfg.train.learning_rate, defaults.learning_rate),
        epochs: common::resolve(args.epochs, file_cfg.train.epochs, defaults.epochs),
        batch_size: common::resolve(args.batch, file_cfg.train.batch_size, defaults.batch_size),
        dropout: common::resolve(args.dropout, file_cfg.train.dropout, defaults.dropout),
        seed: args.seed,
        shared_gate_input: false,
        em_inner_epochs: defaults.em_inner_epochs,
    };
    base.validate()?;

    let rows: Vec<SweepRow> = if args.parallel {
        sweep_parallel(&train, &eval, &m_list, &base)?
    } else {
        m_list
            .iter()
            .map(|&m| sweep_one(&train, &eval, &base, m))
            .collect::<Result<_>>()?
    };

    std::fs::write(&args.out, serde_json::to_string_pretty(&rows)?)?;
    let csv_path = args.out.with_extension("csv");
    let mut csv = String::from("num_experts,mask_accuracy,mask_auc,ssnr_db,final_mean_loglik\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.num_experts,
            r.mask_accuracy,
            r.mask_auc,
            r.ssnr_db.map_or(String::from(""), |v| v.to_string()),
            r.final_mean_loglik
        ));
    }
    std::fs::write(&csv_path, csv)?;

    let mut manifest = common::RunManifest::new(
        "analyze-sweep",
        args.seed,
        serde_json::json!({ "m_list": m_list, "train": base }),
    );
    manifest.record_input(&args.corpus.with_extension("f32"))?;
    manifest.record_output(&args.out);
    manifest.record_output(&csv_path);
    manifest.write_beside(&args.out)?;

    for r in &rows {
        println!(
            "m={}: mask accuracy {:.4}, auc {:.4}, final mean log-likelihood {:.4}",
            r.num_experts, r.mask_accuracy, r.mask_auc, r.final_mean_loglik
        );
    }
    Ok(())
}

fn sweep_one(train: &Corpus, eval: &Corpus, base: &TrainConfig, m: usize) -> Result<SweepRow> {
    let cfg = TrainConfig {
        num_experts: m,
        ..base.clone()
    };
    let (params, _) = train_joint(train, &cfg).with_context(|| format!("training m={m}"))?;
    let model = DmoeModel {
        params,
        feature: train.feature.clone(),
        shared_gate_input: cfg.shared_gate_input,
    };
    Ok(evaluate_on_corpus(&model, eval)?)
}

/// Independent trainings on worker threads; results are collected in
/// m-list order so the output is identical to the sequential path.
fn sweep_parallel(
    train: &Corpus,
    eval: &Corpus,
    m_list: &[usize],
    base: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let cap = common::thread_cap().max(1);
    let mut rows: Vec<Option<SweepRow>> = vec![None; m_list.len()];
    for group in m_list.chunks(cap).zip(chunk_offsets(m_list.len(), cap)) {
        let (ms, offset) = group;
        let results: Vec<Result<SweepRow>> = std::thread::scope(|scope| {
            let handles: Vec<_> = ms
                .iter()
                .map(|&m| scope.spawn(move || sweep_one(train, eval, base, m)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            rows[offset + i] = Some(r?);
        }
    }
    Ok(rows.into_iter().map(Option::unwrap).collect())
}

fn chunk_offsets(len: usize, cap: usize) -> impl Iterator<Item = usize> {
    (0..len).step_by(cap.max(1))
}
