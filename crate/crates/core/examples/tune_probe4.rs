use ctrl_retrieve_core::classifier::ClassifierConfig;
use ctrl_retrieve_core::eval::spearman;
use ctrl_retrieve_core::pipeline::{run_full_experiment, ExperimentConfig};
use ctrl_retrieve_core::synth::{generate, SynthConfig};
use ctrl_retrieve_core::train::TrainConfig;

fn main() {
    let grid: Vec<(usize, f64, f64, usize, f64)> = vec![
        // (retr_epochs, retr_lr, ct_unknown_rate, clf_epochs, clf_l2)
        (400, 0.03, 0.5, 3000, 0.0),
        (600, 0.03, 0.5, 3000, 0.0),
        (400, 0.03, 0.4, 3000, 0.0),
        (600, 0.03, 0.4, 3000, 0.0),
        (600, 0.05, 0.5, 3000, 0.0),
    ];
    for (epochs, lr, unk_rate, clf_epochs, clf_l2) in grid {
        let mut base_t1 = Vec::new();
        let mut base_t20 = Vec::new();
        let mut oracle_t1 = Vec::new();
        let mut s_t1 = vec![Vec::new(); 4];
        let mut s_t20 = vec![Vec::new(); 4];
        let mut clf = Vec::new();
        let mut oracle_violations = 0usize;
        for seed in [41u64, 42, 43] {
            let synth = SynthConfig {
                seed,
                ..SynthConfig::default()
            };
            let (records, _) = generate(&synth).unwrap();
            let config = ExperimentConfig {
                train: TrainConfig {
                    epochs,
                    learning_rate: lr,
                    ..TrainConfig::default()
                },
                classifier: ClassifierConfig {
                    epochs: clf_epochs,
                    l2: clf_l2,
                    ..ClassifierConfig::default()
                },
                train_ct_threshold: 0.5,
                ..ExperimentConfig::default()
            };
            let o = run_full_experiment(&records, &config).unwrap();
            base_t1.push(o.base.accuracy_at(1).unwrap());
            base_t20.push(o.base.accuracy_at(20).unwrap());
            oracle_t1.push(o.oracle.accuracy_at(1).unwrap());
            clf.push(o.classifier_heldout_accuracy);
            for (i, r) in o.sweep.iter().enumerate() {
                s_t1[i].push(r.accuracy_at(1).unwrap());
                s_t20[i].push(r.accuracy_at(20).unwrap());
                if o.oracle.accuracy_at(1).unwrap() < r.accuracy_at(1).unwrap() {
                    oracle_violations += 1;
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let t1: Vec<f64> = s_t1.iter().map(|v| mean(v)).collect();
        println!(
            "re {epochs:<3} lr {lr:<5} unk {unk_rate} clfe {clf_epochs:<4} l2 {clf_l2:<6}: clf {:.2} | base t1 {:.3} t20 {:.3} | cdpr {:.3}/{:.3}/{:.3}/{:.3} t20@.9 {:.3} | orc {:.3} | gap {:+.1} sweepΔ {:+.1} ρ {:+.2} viol {}",
            mean(&clf),
            mean(&base_t1),
            mean(&base_t20),
            t1[0], t1[1], t1[2], t1[3],
            mean(&s_t20[3]),
            mean(&oracle_t1),
            (t1[3] - mean(&base_t1)) * 100.0,
            (t1[3] - t1[0]) * 100.0,
            spearman(&[0.0, 0.5, 0.7, 0.9], &t1),
            oracle_violations,
        );
    }
}
