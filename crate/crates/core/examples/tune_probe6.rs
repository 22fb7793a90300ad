use ctrl_retrieve_core::classifier::ClassifierConfig;
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
    let synth = SynthConfig {
        seed: 41,
        ..SynthConfig::default()
    };
    let (records, _) = generate(&synth).unwrap();
    let config = ExperimentConfig {
        train: TrainConfig {
            epochs: 400,
            learning_rate: 0.03,
            ..TrainConfig::default()
        },
        classifier: ClassifierConfig {
            epochs: 3000,
            l2: 0.0,
            ..ClassifierConfig::default()
        },
        train_ct_threshold: 0.5,
        ..ExperimentConfig::default()
    };
    let vocab = build_vocab_for(&records, &config).unwrap();
    let prepared = prepare(&records, &config, &vocab).unwrap();
    let (clf_for_train, _) = train_query_classifier(&prepared, &config).unwrap();
    let (encoder, _) = train_retriever_mode(&prepared, Some(&clf_for_train), &config).unwrap();
    let index = build_mode_index(&prepared, &encoder, true).unwrap();

    // Map chunk id -> (category, short tag) for readability.
    let doc_tag = |chunk_id: &str| -> String {
        let text = &prepared.chunk_texts[chunk_id];
        let answer = text
            .split_whitespace()
            .find(|w| w.starts_with('a'))
            .unwrap_or("?");
        answer.trim_end_matches('.').to_string()
    };

    let mut shown = 0;
    for q in &prepared.eval_queries {
        let is_collision = q.question.split_whitespace().any(|w| w.starts_with('c'))
            && !q.question.split_whitespace().any(|w| w.starts_with('p'));
        if !is_collision {
            continue;
        }
        let unk = retrieve(
            &encoder, None, &index, &vocab, "q", &q.question,
            &QueryCt::Fixed(ControlToken::Unknown), 5, 512,
        )
        .unwrap();
        let top_text = &prepared.chunk_texts[&unk.ranked[0].chunk_id];
        if contains_answer(top_text, &q.answer_text) {
            continue; // only inspect failures
        }
        shown += 1;
        if shown > 4 {
            break;
        }
        println!("query ({}, answer {}): {}", q.gold_category, q.answer_text, q.question);
        println!("  [unk] top5:");
        for sc in &unk.ranked {
            println!("    {:<10} score {:.4}", doc_tag(&sc.chunk_id), sc.score);
        }
        let gold = retrieve(
            &encoder, None, &index, &vocab, "q", &q.question,
            &QueryCt::Fixed(ControlToken::Class(q.gold_category.clone())), 5, 512,
        )
        .unwrap();
        println!("  [gold ct] top5:");
        for sc in &gold.ranked {
            println!("    {:<10} score {:.4}", doc_tag(&sc.chunk_id), sc.score);
        }
    }
}
