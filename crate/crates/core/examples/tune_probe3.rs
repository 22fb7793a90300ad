use ctrl_retrieve_core::pipeline::{run_full_experiment, ExperimentConfig};
use ctrl_retrieve_core::synth::{generate, SynthConfig};
use ctrl_retrieve_core::train::TrainConfig;

fn main() {
    let grid = [
        (30usize, 0.01f64),
        (100, 0.01),
        (200, 0.01),
        (100, 0.03),
        (200, 0.03),
    ];
    for (epochs, lr) in grid {
        let mut base_t1 = Vec::new();
        let mut base_t20 = Vec::new();
        let mut oracle_t1 = Vec::new();
        let mut s_t1 = vec![Vec::new(); 4];
        let mut s_t20 = vec![Vec::new(); 4];
        let mut clf = Vec::new();
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
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let t1: Vec<f64> = s_t1.iter().map(|v| mean(v)).collect();
        println!(
            "epochs {epochs:<4} lr {lr:<5}: clf {:.2} | base t1 {:.3} t20 {:.3} | cdpr t1 {:.3}/{:.3}/{:.3}/{:.3} t20@.9 {:.3} | oracle t1 {:.3} | gap {:+.1}pts sweep_delta {:+.1}pts",
            mean(&clf),
            mean(&base_t1),
            mean(&base_t20),
            t1[0], t1[1], t1[2], t1[3],
            mean(&s_t20[3]),
            mean(&oracle_t1),
            (t1[3] - mean(&base_t1)) * 100.0,
            (t1[3] - t1[0]) * 100.0,
        );
        // per-seed oracle >= cdpr check (criterion 4 shape)
        for (i, seed) in [41u64, 42, 43].iter().enumerate() {
            for (ti, t) in [0.0, 0.5, 0.7, 0.9].iter().enumerate() {
                if oracle_t1[i] < s_t1[ti][i] {
                    println!(
                        "  WARN seed {seed} t {t}: oracle {:.3} < cdpr {:.3}",
                        oracle_t1[i], s_t1[ti][i]
                    );
                }
            }
        }
    }
}
