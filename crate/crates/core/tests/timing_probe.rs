use std::time::Instant;

use dmoe_core::analysis::{evaluate_on_corpus, gating_stats};
use dmoe_core::dataset::build_synth_corpus;
use dmoe_core::dmoe::{train_joint, DmoeModel, TrainConfig};
use dmoe_core::FeatureConfig;

#[test]
#[ignore]
fn timing_probe() {
    let cfg = FeatureConfig::desk_scale();
    for probe_seed in [3u64, 11, 19] {
    let train = build_synth_corpus(200, 5.0, probe_seed, &cfg).unwrap();
    let eval = build_synth_corpus(24, 5.0, 7001, &cfg).unwrap();
    println!("seed {probe_seed} train frames: {}", train.num_frames());

    let mut models = Vec::new();
    for m in [1usize, 2] {
        let mut tc = TrainConfig::desk_scale(probe_seed);
        tc.num_experts = m;
        let t1 = Instant::now();
        let (params, report) = train_joint(&train, &tc).unwrap();
        let model = DmoeModel { params, feature: cfg.clone(), shared_gate_input: false };
        let eval_row = evaluate_on_corpus(&model, &eval).unwrap();
        let train_row = evaluate_on_corpus(&model, &train).unwrap();
        println!(
            "m={m}: {:?}, ll {:.3}->{:.3}, eval acc {:.4} train acc {:.4}, eval ssnr {:?}, nondecr {:.2}",
            t1.elapsed(),
            report.initial_mean_loglik,
            report.final_mean_loglik(),
            eval_row.mask_accuracy,
            train_row.mask_accuracy,
            eval_row.ssnr_db,
            report.nondecreasing_fraction()
        );
        // per-regime, per-band accuracy diagnostics
        let bins = cfg.num_bins();
        let split = bins / 2;
        let mut correct = [[0usize; 2]; 2];
        let mut total = [[0usize; 2]; 2];
        for pair in eval.pairs() {
            let spp = dmoe_core::dmoe::final_spp(&model.params, &pair.expert_input, &pair.gate_input).unwrap();
            let regime = pair.regime_tag.unwrap() as usize;
            for (k, (p, b)) in spp.probs().iter().zip(pair.label.bits()).enumerate() {
                let band = usize::from(k >= split);
                total[regime][band] += 1;
                if u8::from(*p >= 0.5) == *b { correct[regime][band] += 1; }
            }
        }
        for regime in 0..2 {
            for band in 0..2 {
                print!("  r{regime}b{band} {:.4}", correct[regime][band] as f64 / total[regime][band] as f64);
            }
        }
        println!();
        models.push(model);
    }
    let stats = gating_stats(&models[1], eval.pairs()).unwrap();
    for r in &stats.regimes {
        println!("seed {probe_seed} regime {}: majority {} frac {:.3}", r.regime, r.majority_expert(), r.majority_fraction());
    }
    }
}
