//! `dmoe` — mixture-of-experts speech enhancement toolkit.
//!
//! Subcommands: `make-data`, `train`, `enhance`, `eval`, `analyze`.
//! Every run writes a `<output>.run.json` manifest with the resolved
//! configuration, seed, and input hashes, so any artifact can be
//! reproduced from its manifest alone.

mod analyze;
mod common;
mod data;
mod enhance_cmd;
mod eval_cmd;
mod train_cmd;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "dmoe",
    version,
    about = "Speech enhancement with a deep mixture of experts",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a feature corpus from WAV files or the synthetic generator.
    MakeData(data::MakeDataArgs),
    /// Train a model (joint gradient ascent or EM).
    Train(train_cmd::TrainArgs),
    /// Enhance a noisy WAV file with a trained model.
    Enhance(enhance_cmd::EnhanceArgs),
    /// Mix, enhance, and score WAV files over a list of SNRs.
    Eval(eval_cmd::EvalArgs),
    /// Model introspection: gating stats, expert probes, expert sweeps.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCommand),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MakeData(args) => data::run(args),
        Command::Train(args) => train_cmd::run(args),
        Command::Enhance(args) => enhance_cmd::run(args),
        Command::Eval(args) => eval_cmd::run(args),
        Command::Analyze(cmd) => analyze::run(cmd),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
