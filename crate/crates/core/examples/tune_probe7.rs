use ctrl_retrieve_core::classifier::ClassifierConfig;
use ctrl_retrieve_core::eval::spearman;
use ctrl_retrieve_core::pipeline::{run_full_experiment, ExperimentConfig};
use ctrl_retrieve_core::synth::{generate, SynthConfig};
use ctrl_retrieve_core::train::TrainConfig;

fn main() {
    // (epochs, lr, unk_rate, d_emb, d_out)
    let grid: Vec<(usize, f64, f64, usize, usize)> = vec![
        (200, 0.005, 0.9, 128, 90),
        (225, 0.005, 0.9, 128, 90),
        (200, 0.005, 0.875, 128, 90),
        (225, 0.005, 0.875, 128, 90),
        (250, 0.005, 0.875, 128, 90),
        (250, 0.005, 0.9, 128, 90),
    ];
    for (epochs, lr, unk, d_emb, qpd) in grid {
        let d_out = 128usize;
        let mut base_t1 = Vec::new();
        let mut base_t20 = Vec::new();
        let mut oracle_t1 = Vec::new();
        let mut s_t1 = vec![Vec::new(); 4];
        let mut s_t20 = vec![Vec::new(); 4];
        let mut min_oracle_margin = f64::INFINITY;
        let mut worst_seed_delta = f64::INFINITY;
        let mut clf = Vec::new();
        for seed in [41u64, 42, 43] {
            let synth = SynthConfig { seed, queries_per_domain: qpd, ..SynthConfig::default() };
            let (records, _) = generate(&synth).unwrap();
            let config = ExperimentConfig {
                d_emb,
                d_out,
                train: TrainConfig { epochs, learning_rate: lr, ..TrainConfig::default() },
                classifier: ClassifierConfig { epochs: 12000, learning_rate: 0.1, l2: 0.0, ..ClassifierConfig::default() },
                train_ct_threshold: unk,
                ..ExperimentConfig::default()
            };
            let o = run_full_experiment(&records, &config).unwrap();
            base_t1.push(o.base.accuracy_at(1).unwrap());
            base_t20.push(o.base.accuracy_at(20).unwrap());
            clf.push(o.classifier_heldout_accuracy);
            let orc = o.oracle.accuracy_at(1).unwrap();
            oracle_t1.push(orc);
            for (i, r) in o.sweep.iter().enumerate() {
                let t1 = r.accuracy_at(1).unwrap();
                s_t1[i].push(t1);
                s_t20[i].push(r.accuracy_at(20).unwrap());
                min_oracle_margin = min_oracle_margin.min(orc - t1);
            }
            let d = s_t1[3].last().unwrap() - s_t1[0].last().unwrap();
            worst_seed_delta = worst_seed_delta.min(d);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let t1: Vec<f64> = s_t1.iter().map(|v| mean(v)).collect();
        let gap = (t1[3] - mean(&base_t1)) * 100.0;
        let t20_slack = (mean(&s_t20[3]) - mean(&base_t20)) * 100.0;
        let sweep_delta = (t1[3] - t1[0]) * 100.0;
        let rho = spearman(&[0.0, 0.5, 0.7, 0.9], &t1);
        let pass = gap >= 5.0 && t20_slack >= 0.0 && sweep_delta >= -1.0 && rho >= 0.0 && min_oracle_margin >= 0.0;
        println!(
            "e {epochs:<3} lr {lr:<4} unk {unk} q {qpd} d {d_emb}/{d_out}: clf {:.2} base {:.3}/{:.3} sweep {:.3}>{:.3}>{:.3}>{:.3} orc {:.3} | C3 {gap:+.1}/{t20_slack:+.1} C5 {sweep_delta:+.1}/ρ{rho:+.2}/w{:+.1} C4 {:+.3} {}",
            mean(&clf), mean(&base_t1), mean(&base_t20),
            t1[0], t1[1], t1[2], t1[3],
            mean(&oracle_t1),
            worst_seed_delta * 100.0,
            min_oracle_margin,
            if pass { "PASS" } else { "" },
        );
    }
}
