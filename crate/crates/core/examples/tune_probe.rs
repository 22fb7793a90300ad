use std::time::Instant;

use ctrl_retrieve_core::pipeline::{run_full_experiment, ExperimentConfig};
use ctrl_retrieve_core::synth::{generate, SynthConfig};

fn main() {
    let seeds = [41u64, 42, 43];
    let mut base_top1 = Vec::new();
    let mut base_top20 = Vec::new();
    let mut oracle_top1 = Vec::new();
    let mut sweep_top1: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut sweep_top20: Vec<Vec<f64>> = vec![Vec::new(); 4];

    for seed in seeds {
        let t0 = Instant::now();
        let synth = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let (records, _) = generate(&synth).unwrap();
        let config = ExperimentConfig::default();
        let outcome = run_full_experiment(&records, &config).unwrap();
        println!(
            "seed {seed}: {} records, {} eval queries, clf heldout acc {:.3}, base loss {:.3}->{:.3}, cdpr loss {:.3}->{:.3}, elapsed {:?}",
            records.len(),
            outcome.base.per_query_hits.len(),
            outcome.classifier_heldout_accuracy,
            outcome.base_loss_trace.first().unwrap(),
            outcome.base_loss_trace.last().unwrap(),
            outcome.cdpr_loss_trace.first().unwrap(),
            outcome.cdpr_loss_trace.last().unwrap(),
            t0.elapsed(),
        );
        println!(
            "  base   top1 {:.3} top20 {:.3}",
            outcome.base.accuracy_at(1).unwrap(),
            outcome.base.accuracy_at(20).unwrap()
        );
        base_top1.push(outcome.base.accuracy_at(1).unwrap());
        base_top20.push(outcome.base.accuracy_at(20).unwrap());
        for (i, report) in outcome.sweep.iter().enumerate() {
            println!(
                "  cdpr@{:.1} top1 {:.3} top20 {:.3}",
                report.threshold.unwrap(),
                report.accuracy_at(1).unwrap(),
                report.accuracy_at(20).unwrap()
            );
            sweep_top1[i].push(report.accuracy_at(1).unwrap());
            sweep_top20[i].push(report.accuracy_at(20).unwrap());
        }
        println!(
            "  oracle top1 {:.3} top20 {:.3}",
            outcome.oracle.accuracy_at(1).unwrap(),
            outcome.oracle.accuracy_at(20).unwrap()
        );
        oracle_top1.push(outcome.oracle.accuracy_at(1).unwrap());
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("\n=== means over seeds ===");
    println!("base   top1 {:.4} top20 {:.4}", mean(&base_top1), mean(&base_top20));
    for (i, t) in [0.0, 0.5, 0.7, 0.9].iter().enumerate() {
        println!(
            "cdpr@{t} top1 {:.4} top20 {:.4}",
            mean(&sweep_top1[i]),
            mean(&sweep_top20[i])
        );
    }
    println!("oracle top1 {:.4}", mean(&oracle_top1));
    println!(
        "\nC3 gap (cdpr@0.9 - base top1): {:.2} points (need >= 5)",
        (mean(&sweep_top1[3]) - mean(&base_top1)) * 100.0
    );
    println!(
        "C3 top20: cdpr {:.4} vs base {:.4} (need >=)",
        mean(&sweep_top20[3]),
        mean(&base_top20)
    );
    println!(
        "C5 top1@0.9 - top1@0: {:.2} points (need >= -1)",
        (mean(&sweep_top1[3]) - mean(&sweep_top1[0])) * 100.0
    );
    let means: Vec<f64> = sweep_top1.iter().map(|v| mean(v)).collect();
    println!(
        "C5 sweep means: {:?} spearman {:.3} (need >= 0)",
        means,
        ctrl_retrieve_core::eval::spearman(&[0.0, 0.5, 0.7, 0.9], &means)
    );
}
