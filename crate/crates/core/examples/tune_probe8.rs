use ctrl_retrieve_core::classifier::{predict_proba, ClassifierConfig};
use ctrl_retrieve_core::eval::contains_answer;
use ctrl_retrieve_core::index::{retrieve, QueryCt};
use ctrl_retrieve_core::pipeline::{
    build_mode_index, build_vocab_for, prepare, train_query_classifier, train_retriever_mode,
    ExperimentConfig,
};
use ctrl_retrieve_core::synth::{generate, SynthConfig};
use ctrl_retrieve_core::train::TrainConfig;
use ctrl_retrieve_core::vocab::ControlToken;

fn main() {
    for seed in [41u64, 42, 43] {
        let synth = SynthConfig { seed, ..SynthConfig::default() };
        let (records, _) = generate(&synth).unwrap();
        let config = ExperimentConfig {
            train: TrainConfig { epochs: 200, learning_rate: 0.02, ..TrainConfig::default() },
            classifier: ClassifierConfig { epochs: 3000, l2: 0.0, ..ClassifierConfig::default() },
            train_ct_threshold: 0.5,
            ..ExperimentConfig::default()
        };
        let vocab = build_vocab_for(&records, &config).unwrap();
        let prepared = prepare(&records, &config, &vocab).unwrap();
        let (clf_for_train, _) = train_query_classifier(&prepared, &config).unwrap();
    let (encoder, _) = train_retriever_mode(&prepared, Some(&clf_for_train), &config).unwrap();
        let index = build_mode_index(&prepared, &encoder, true).unwrap();
        let (classifier, _) = train_query_classifier(&prepared, &config).unwrap();

        let hit1 = |ct: &QueryCt, question: &str, answer: &str| -> bool {
            let r = retrieve(&encoder, Some(&classifier), &index, &vocab, "q", question, ct, 1, 512).unwrap();
            contains_answer(&prepared.chunk_texts[&r.ranked[0].chunk_id], answer)
        };

        println!("=== seed {seed}: conversions between adjacent thresholds");
        let mut top1 = [0usize; 4];
        let thresholds = [0.0, 0.5, 0.7, 0.9];
        for q in &prepared.eval_queries {
            let body = vocab.encode_text(&q.question, 512);
            let d = predict_proba(&classifier, &body).unwrap();
            let right = d.predicted_class == q.gold_category;
            let hit_ct = hit1(
                &QueryCt::Fixed(ControlToken::Class(d.predicted_class.clone())),
                &q.question, &q.answer_text,
            );
            let hit_unk = hit1(&QueryCt::Fixed(ControlToken::Unknown), &q.question, &q.answer_text);
            for (i, &t) in thresholds.iter().enumerate() {
                if d.max_prob >= t {
                    top1[i] += hit_ct as usize;
                } else {
                    top1[i] += hit_unk as usize;
                }
            }
            // Report queries whose assignment flips somewhere in the grid.
            if d.max_prob >= 0.0 && d.max_prob < 0.9 && (hit_ct != hit_unk) {
                let evi: Vec<&str> = q
                    .question
                    .split_whitespace()
                    .filter(|w| !w.starts_with('s'))
                    .collect();
                println!(
                    "  conf {:.2} {} ct_hit {} unk_hit {} evidence {:?}",
                    d.max_prob,
                    if right { "RIGHT" } else { "WRONG" },
                    hit_ct as u8,
                    hit_unk as u8,
                    evi
                );
            }
        }
        println!(
            "  sweep top1: {:?} (n={})",
            top1,
            prepared.eval_queries.len()
        );
    }
}
