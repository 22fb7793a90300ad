use ctrl_retrieve_core::eval::contains_answer;
use ctrl_retrieve_core::index::{retrieve, QueryCt};
use ctrl_retrieve_core::pipeline::{
    train_query_classifier,
    build_mode_index, build_vocab_for, prepare, train_retriever_mode, ExperimentConfig,
};
use ctrl_retrieve_core::synth::{generate, SynthConfig};
use ctrl_retrieve_core::train::TrainConfig;
use ctrl_retrieve_core::vocab::ControlToken;

fn main() {
    for seed in [41u64, 42] {
        println!("=== seed {seed}");
        for (qpd, epochs, lr) in [(60usize, 150usize, 0.005f64), (60, 300, 0.005), (60, 200, 0.01), (90, 150, 0.005), (90, 300, 0.005), (90, 200, 0.01)] {
            let synth = SynthConfig { seed, queries_per_domain: qpd, ..SynthConfig::default() };
            let (records, _) = generate(&synth).unwrap();
            let config = ExperimentConfig {
                d_emb: 128,
                d_out: 128,
                train: TrainConfig { epochs, learning_rate: lr, ..TrainConfig::default() },
                train_ct_threshold: 0.5,
                ..ExperimentConfig::default()
            };
            let vocab = build_vocab_for(&records, &config).unwrap();
            let prepared = prepare(&records, &config, &vocab).unwrap();

            let (base_enc, trace) = train_retriever_mode(&prepared, None, &config).unwrap();
            let base_idx = build_mode_index(&prepared, &base_enc, false).unwrap();
            let (clf_for_train, _) = train_query_classifier(&prepared, &config).unwrap();
            let (ct_enc, _) = train_retriever_mode(&prepared, Some(&clf_for_train), &config).unwrap();
            let ct_idx = build_mode_index(&prepared, &ct_enc, true).unwrap();

            let t1 = |enc, idx, ct: &QueryCt, gold_ct: bool| -> f64 {
                let mut hits = 0usize;
                for q in &prepared.eval_queries {
                    let use_ct = if gold_ct {
                        QueryCt::Fixed(ControlToken::Class(q.gold_category.clone()))
                    } else {
                        ct.clone()
                    };
                    let r = retrieve(enc, None, idx, &vocab, "q", &q.question, &use_ct, 1, 512).unwrap();
                    if contains_answer(&prepared.chunk_texts[&r.ranked[0].chunk_id], &q.answer_text) {
                        hits += 1;
                    }
                }
                hits as f64 / prepared.eval_queries.len() as f64
            };
            let base_t1 = t1(&base_enc, &base_idx, &QueryCt::None, false);
            let unk_t1 = t1(&ct_enc, &ct_idx, &QueryCt::Fixed(ControlToken::Unknown), false);
            let gold_t1 = t1(&ct_enc, &ct_idx, &QueryCt::None, true);
            println!(
                "  q {qpd} e {epochs:<3} lr {lr:<5}: loss {:.3}->{:.3} | base {:.3} unk {:.3} gold {:.3}",
                trace[0], trace[trace.len() - 1], base_t1, unk_t1, gold_t1
            );
        }
    }
}
