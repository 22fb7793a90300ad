use ctrl_retrieve_core::eval::contains_answer;
use ctrl_retrieve_core::index::{retrieve, QueryCt};
use ctrl_retrieve_core::pipeline::{
    build_mode_index, build_vocab_for, prepare, train_retriever_mode, ExperimentConfig,
};
use ctrl_retrieve_core::synth::{generate, SynthConfig};
use ctrl_retrieve_core::train::{OptimizerKind, TrainConfig};

fn main() {
    for (epochs, lr) in [
        (600usize, 0.05f64),
        (600, 0.1),
        (600, 0.25),
        (1500, 0.05),
        (1500, 0.1),
        (1500, 0.25),
    ] {
        let mut out = String::new();
        for seed in [41u64, 42] {
            let synth = SynthConfig { seed, ..SynthConfig::default() };
            let (records, _) = generate(&synth).unwrap();
            let config = ExperimentConfig {
                d_emb: 128,
                d_out: 128,
                train: TrainConfig {
                    epochs,
                    learning_rate: lr,
                    optimizer: OptimizerKind::Sgd,
                    ..TrainConfig::default()
                },
                train_ct_threshold: 0.5,
                ..ExperimentConfig::default()
            };
            let vocab = build_vocab_for(&records, &config).unwrap();
            let prepared = prepare(&records, &config, &vocab).unwrap();
            let (base_enc, trace) = train_retriever_mode(&prepared, None, &config).unwrap();
            let base_idx = build_mode_index(&prepared, &base_enc, false).unwrap();
            let mut eval_hits = 0usize;
            for q in &prepared.eval_queries {
                let r = retrieve(
                    &base_enc, None, &base_idx, &vocab, "q", &q.question, &QueryCt::None, 1, 512,
                )
                .unwrap();
                if contains_answer(&prepared.chunk_texts[&r.ranked[0].chunk_id], &q.answer_text) {
                    eval_hits += 1;
                }
            }
            out.push_str(&format!(
                " | s{seed}: loss {:.3}->{:.3} eval_t1 {:.3}",
                trace[0],
                trace[trace.len() - 1],
                eval_hits as f64 / prepared.eval_queries.len() as f64
            ));
        }
        println!("sgd e {epochs:<4} lr {lr:<4}{out}");
    }
}
