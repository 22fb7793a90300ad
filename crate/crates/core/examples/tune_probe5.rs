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
    let synth = SynthConfig { seed: 41, ..SynthConfig::default() };
    let (records, _) = generate(&synth).unwrap();
    let config = ExperimentConfig {
        train: TrainConfig { epochs: 600, learning_rate: 0.03, ..TrainConfig::default() },
        classifier: ClassifierConfig { epochs: 3000, l2: 0.0, ..ClassifierConfig::default() },
        train_ct_threshold: 0.5,
        ..ExperimentConfig::default()
    };
    let vocab = build_vocab_for(&records, &config).unwrap();
    let prepared = prepare(&records, &config, &vocab).unwrap();
    let (clf_for_train, _) = train_query_classifier(&prepared, &config).unwrap();
    let (encoder, _) = train_retriever_mode(&prepared, Some(&clf_for_train), &config).unwrap();
    let index = build_mode_index(&prepared, &encoder, true).unwrap();
    let (classifier, acc) = train_query_classifier(&prepared, &config).unwrap();
    println!("clf heldout {acc:.3}, eval n {}", prepared.eval_queries.len());

    let hit = |ct: &QueryCt, question: &str, answer: &str| -> bool {
        let r = retrieve(&encoder, Some(&classifier), &index, &vocab, "q", question, ct, 1, 512).unwrap();
        contains_answer(&prepared.chunk_texts[&r.ranked[0].chunk_id], answer)
    };

    // type: 0 = has private, 1 = collision only, 2 = no evidence
    let qtype = |question: &str| -> usize {
        let has_p = question.split_whitespace().any(|w| w.starts_with('p'));
        let has_c = question.split_whitespace().any(|w| w.starts_with('c'));
        if has_p { 0 } else if has_c { 1 } else { 2 }
    };
    let bands = [(0.0, 0.5), (0.5, 0.7), (0.7, 0.9), (0.9, 1.01)];
    // stats[type][band] = [n, right, hit_pred, hit_unk, hit_gold]
    let mut stats = vec![vec![[0usize; 5]; bands.len()]; 3];
    for q in &prepared.eval_queries {
        let body = vocab.encode_text(&q.question, 512);
        let d = predict_proba(&classifier, &body).unwrap();
        let band = bands.iter().position(|(lo, hi)| d.max_prob >= *lo && d.max_prob < *hi).unwrap();
        let t = qtype(&q.question);
        let right = d.predicted_class == q.gold_category;
        let s = &mut stats[t][band];
        s[0] += 1;
        s[1] += right as usize;
        s[2] += hit(&QueryCt::Fixed(ControlToken::Class(d.predicted_class.clone())), &q.question, &q.answer_text) as usize;
        s[3] += hit(&QueryCt::Fixed(ControlToken::Unknown), &q.question, &q.answer_text) as usize;
        s[4] += hit(&QueryCt::Fixed(ControlToken::Class(q.gold_category.clone())), &q.question, &q.answer_text) as usize;
    }
    for (t, name) in ["private", "collision-only", "none"].iter().enumerate() {
        println!("--- {name}");
        println!("band      n  right  hit(pred)  hit(unk)  hit(gold)");
        for (i, (lo, hi)) in bands.iter().enumerate() {
            let s = stats[t][i];
            println!("[{lo:.1},{hi:.1})  {:>2}  {:>4}  {:>8}  {:>8}  {:>8}", s[0], s[1], s[2], s[3], s[4]);
        }
    }
}
