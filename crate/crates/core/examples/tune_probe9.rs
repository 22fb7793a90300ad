use ctrl_retrieve_core::pipeline::{
    train_query_classifier,
    build_mode_index, build_vocab_for, evaluate_mode, prepare, train_retriever_mode,
    ExperimentConfig,
};
use ctrl_retrieve_core::eval::EvalMode;
use ctrl_retrieve_core::synth::{generate, SynthConfig};
use ctrl_retrieve_core::train::TrainConfig;

fn main() {
    for (epochs, lr, batch) in [(300usize, 0.02f64, 16usize), (300, 0.02, 32), (600, 0.02, 32), (600, 0.01, 32)] {
        let mut base_t1 = Vec::new();
        let mut base_t20 = Vec::new();
        let mut oracle_t1 = Vec::new();
        for seed in [41u64, 42, 43] {
            let synth = SynthConfig { seed, ..SynthConfig::default() };
            let (records, _) = generate(&synth).unwrap();
            let config = ExperimentConfig {
                d_emb: 128,
                d_out: 128,
                train: TrainConfig { epochs, learning_rate: lr, batch_size: batch, ..TrainConfig::default() },
                train_ct_threshold: 0.5,
                ..ExperimentConfig::default()
            };
            let vocab = build_vocab_for(&records, &config).unwrap();
            let prepared = prepare(&records, &config, &vocab).unwrap();
            let (base_enc, _) = train_retriever_mode(&prepared, None, &config).unwrap();
            let base_idx = build_mode_index(&prepared, &base_enc, false).unwrap();
            let base = evaluate_mode(&prepared, &base_enc, &base_idx, None, EvalMode::DprBase, None, &config).unwrap();
            base_t1.push(base.accuracy_at(1).unwrap());
            base_t20.push(base.accuracy_at(20).unwrap());
            let (clf_for_train, _) = train_query_classifier(&prepared, &config).unwrap();
            let (ct_enc, _) = train_retriever_mode(&prepared, Some(&clf_for_train), &config).unwrap();
            let ct_idx = build_mode_index(&prepared, &ct_enc, true).unwrap();
            let orc = evaluate_mode(&prepared, &ct_enc, &ct_idx, None, EvalMode::CdprOracleCt, None, &config).unwrap();
            oracle_t1.push(orc.accuracy_at(1).unwrap());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "e {epochs} lr {lr} B {batch}: base t1 {:.3} t20 {:.3} | oracle t1 {:.3}",
            mean(&base_t1), mean(&base_t20), mean(&oracle_t1)
        );
    }
}
