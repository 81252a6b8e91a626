//! End-to-end exercises of the `dmoe` binary: every subcommand on a tiny
//! synthetic corpus, determinism of artifacts, and exit-code contracts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dmoe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dmoe"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("failed to spawn dmoe");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dmoe-cli-test-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn make_tiny_corpus(dir: &Path, stem: &str, seed: u64) -> PathBuf {
    let corpus = dir.join(stem);
    run_ok(dmoe().args([
        "make-data",
        "--synthetic",
        "4",
        "--snr",
        "5",
        "--seed",
        &seed.to_string(),
        "--out",
        corpus.to_str().unwrap(),
    ]));
    corpus
}

fn train_tiny_model(dir: &Path, corpus: &Path, name: &str, seed: u64) -> PathBuf {
    let model = dir.join(name);
    run_ok(dmoe().args([
        "train",
        "--trainer",
        "joint",
        "--experts",
        "2",
        "--hidden",
        "16",
        "--epochs",
        "2",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
    ]));
    model
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = dmoe().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"), "missing usage text: {text}");
}

#[test]
fn unknown_flag_exits_2() {
    let out = dmoe().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1_with_single_line_error() {
    let out = dmoe()
        .args(["train", "--corpus", "/nonexistent/corpus", "--out", "/tmp/x.dmoe"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}

#[test]
fn make_data_writes_corpus_manifest_and_run_manifest() {
    let dir = temp_dir("makedata");
    let corpus = make_tiny_corpus(&dir, "corpus", 11);
    assert!(corpus.with_extension("f32").exists());
    assert!(corpus.with_extension("json").exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(corpus.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(manifest["schema"], "dmoe-corpus/1");
    assert!(manifest["has_regime_tags"].as_bool().unwrap());

    let run: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("corpus.run.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(run["command"], "make-data");
    assert_eq!(run["seed"], 11);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_is_byte_deterministic_across_runs() {
    let dir = temp_dir("train-det");
    let corpus = make_tiny_corpus(&dir, "corpus", 7);
    let model_a = train_tiny_model(&dir, &corpus, "a.dmoe", 7);
    let model_b = train_tiny_model(&dir, &corpus, "b.dmoe", 7);
    let a = std::fs::read(&model_a).unwrap();
    let b = std::fs::read(&model_b).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical models");

    // Reports are byte-identical too.
    let ra = std::fs::read(dir.join("a.dmoe.report.json")).unwrap();
    let rb = std::fs::read(dir.join("b.dmoe.report.json")).unwrap();
    assert_eq!(ra, rb);

    // A different seed changes the model.
    let model_c = train_tiny_model(&dir, &corpus, "c.dmoe", 8);
    let c = std::fs::read(&model_c).unwrap();
    assert_ne!(a, c);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn em_trainer_reports_iteration_rows() {
    let dir = temp_dir("em");
    let corpus = make_tiny_corpus(&dir, "corpus", 9);
    let model = dir.join("em.dmoe");
    run_ok(dmoe().args([
        "train",
        "--trainer",
        "em",
        "--experts",
        "2",
        "--hidden",
        "16",
        "--epochs",
        "2",
        "--inner-epochs",
        "1",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("em.dmoe.report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["trainer"], "em");
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["index"], 1);
    assert_eq!(rows[1]["index"], 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn enhance_and_eval_work_on_wavs() {
    let dir = temp_dir("enhance");
    let corpus = make_tiny_corpus(&dir, "corpus", 13);
    let model = train_tiny_model(&dir, &corpus, "model.dmoe", 13);

    // Synthesize a clean file and a noise file at the model's rate.
    let rate = 8000u32;
    let clean_dir = dir.join("clean");
    std::fs::create_dir_all(&clean_dir).unwrap();
    let clean: Vec<f64> = (0..8000)
        .map(|i| 0.4 * (std::f64::consts::TAU * 180.0 * i as f64 / f64::from(rate)).sin())
        .collect();
    let noise: Vec<f64> = (0..16000u64)
        .map(|i| 0.2 * ((i.wrapping_mul(2654435761) >> 7) % 65536) as f64 / 65536.0 - 0.1)
        .collect();
    let cw = dmoe_core::signal::Waveform::new(clean, rate).unwrap();
    let nw = dmoe_core::signal::Waveform::new(noise, rate).unwrap();
    dmoe_core::signal::write_wav_mono(clean_dir.join("utt0.wav"), &cw).unwrap();
    let noise_path = dir.join("noise.wav");
    dmoe_core::signal::write_wav_mono(&noise_path, &nw).unwrap();

    // Mix one noisy input for enhance.
    let (noisy, _) = dmoe_core::dataset::mix_at_snr(&cw, &nw, 5.0, 3).unwrap();
    let noisy_path = dir.join("noisy.wav");
    dmoe_core::signal::write_wav_mono(&noisy_path, &noisy).unwrap();

    let out_path = dir.join("enhanced.wav");
    let spp_path = dir.join("spp.f32");
    run_ok(dmoe().args([
        "enhance",
        "--model",
        model.to_str().unwrap(),
        "--in",
        noisy_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--dump-spp",
        spp_path.to_str().unwrap(),
    ]));
    assert!(out_path.exists());
    let enhanced = dmoe_core::signal::read_wav_mono(&out_path).unwrap();
    assert_eq!(enhanced.len(), noisy.len());

    let spp_meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(spp_path.with_extension("json")).unwrap())
            .unwrap();
    let rows = spp_meta["rows"].as_u64().unwrap() as usize;
    let cols = spp_meta["cols"].as_u64().unwrap() as usize;
    let bytes = std::fs::read(&spp_path).unwrap();
    assert_eq!(bytes.len(), rows * cols * 4);

    // Eval over two SNRs emits JSON and CSV.
    let report_path = dir.join("report.json");
    let csv_path = dir.join("report.csv");
    run_ok(dmoe().args([
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--clean-dir",
        clean_dir.to_str().unwrap(),
        "--noise-file",
        noise_path.to_str().unwrap(),
        "--snr-list",
        "0,10",
        "--out",
        report_path.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["per_snr"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("snr_db,"));
    assert_eq!(csv.lines().count(), 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn analyze_subcommands_produce_reports() {
    let dir = temp_dir("analyze");
    let corpus = make_tiny_corpus(&dir, "corpus", 17);
    let model = train_tiny_model(&dir, &corpus, "model.dmoe", 17);

    let gating_path = dir.join("gating.json");
    run_ok(dmoe().args([
        "analyze",
        "gating",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        gating_path.to_str().unwrap(),
    ]));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&gating_path).unwrap()).unwrap();
    assert_eq!(stats["regimes"].as_array().unwrap().len(), 2);
    assert!(gating_path.with_extension("csv").exists());

    let probe_path = dir.join("probe.f32");
    run_ok(dmoe().args([
        "analyze",
        "probe",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        probe_path.to_str().unwrap(),
    ]));
    assert!(probe_path.exists());
    assert!(probe_path.with_extension("json").exists());

    let sweep_path = dir.join("sweep.json");
    run_ok(dmoe().args([
        "analyze",
        "sweep",
        "--corpus",
        corpus.to_str().unwrap(),
        "--m-list",
        "1,2",
        "--epochs",
        "1",
        "--hidden",
        "8",
        "--out",
        sweep_path.to_str().unwrap(),
    ]));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sweep_path).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[0]["num_experts"], 1);
    assert_eq!(rows[1]["num_experts"], 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn parallel_sweep_matches_sequential() {
    let dir = temp_dir("sweep-par");
    let corpus = make_tiny_corpus(&dir, "corpus", 19);
    let seq = dir.join("seq.json");
    let par = dir.join("par.json");
    for (path, extra) in [(&seq, None), (&par, Some("--parallel"))] {
        let mut cmd = dmoe();
        cmd.args([
            "analyze",
            "sweep",
            "--corpus",
            corpus.to_str().unwrap(),
            "--m-list",
            "1,2",
            "--epochs",
            "1",
            "--hidden",
            "8",
            "--seed",
            "19",
            "--out",
            path.to_str().unwrap(),
        ]);
        if let Some(flag) = extra {
            cmd.arg(flag);
            cmd.env("DMOE_THREADS", "2");
        }
        run_ok(&mut cmd);
    }
    assert_eq!(
        std::fs::read(&seq).unwrap(),
        std::fs::read(&par).unwrap(),
        "parallel sweep must reproduce the sequential result"
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = temp_dir("config");
    let corpus = make_tiny_corpus(&dir, "corpus", 23);
    let config_path = dir.join("cfg.json");
    std::fs::write(
        &config_path,
        serde_json::json!({"train": {"epochs": 4, "hidden": [8], "experts": 1}}).to_string(),
    )
    .unwrap();

    // Config file alone: 4 epochs, m=1.
    let model_a = dir.join("a.dmoe");
    run_ok(dmoe().args([
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        model_a.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
    ]));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("a.dmoe.report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["config"]["epochs"], 4);
    assert_eq!(report["config"]["num_experts"], 1);

    // The --epochs flag wins over the file.
    let model_b = dir.join("b.dmoe");
    run_ok(dmoe().args([
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        model_b.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--epochs",
        "1",
    ]));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("b.dmoe.report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["config"]["epochs"], 1);
    std::fs::remove_dir_all(&dir).ok();
}
