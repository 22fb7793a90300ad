use ctrl_retrieve_core::classifier::{predict_proba, train_classifier, ClassifierConfig};
use ctrl_retrieve_core::pipeline::{build_vocab_for, prepare, ExperimentConfig};
use ctrl_retrieve_core::synth::{generate, SynthConfig};

fn main() {
    let synth = SynthConfig {
        seed: 41,
        ..SynthConfig::default()
    };
    let (records, _) = generate(&synth).unwrap();
    let config = ExperimentConfig::default();
    let vocab = build_vocab_for(&records, &config).unwrap();
    let prepared = prepare(&records, &config, &vocab).unwrap();

    for (lr, epochs, tf_idf) in [
        (0.1, 8000usize, false),
        (0.25, 8000, false),
        (0.1, 8000, true),
        (0.25, 8000, true),
        (0.25, 20000, true),
        (0.5, 8000, true),
    ] {
        let cc = ClassifierConfig {
            epochs,
            learning_rate: lr,
            l2: 0.0,
            tf_idf,
            ..ClassifierConfig::default()
        };
        let (params, heldout) =
            train_classifier(&vocab, &prepared.classifier_examples, &cc).unwrap();
        let mut n = 0usize;
        let mut right = 0usize;
        let mut conf90 = 0usize;
        let mut right90 = 0usize;
        let mut type_acc = [[0usize; 2]; 3];
        for q in &prepared.eval_queries {
            let body = vocab.encode_text(&q.question, 512);
            let d = predict_proba(&params, &body).unwrap();
            let ok = d.predicted_class == q.gold_category;
            n += 1;
            right += ok as usize;
            if d.max_prob >= 0.9 {
                conf90 += 1;
                right90 += ok as usize;
            }
            let has_p = q.question.split_whitespace().any(|w| w.starts_with('p'));
            let has_c = q.question.split_whitespace().any(|w| w.starts_with('c'));
            let t = if has_p { 0 } else if has_c { 1 } else { 2 };
            type_acc[t][0] += 1;
            type_acc[t][1] += ok as usize;
        }
        println!(
            "lr {lr:<4} e {epochs:<5} tfidf {tf_idf:<5}: heldout {heldout:.3} eval {:.3} | P(c>=.9) {:.3} right|c90 {:.3} | priv {}/{} coll {}/{} none {}/{}",
            right as f64 / n as f64,
            conf90 as f64 / n as f64,
            if conf90 > 0 { right90 as f64 / conf90 as f64 } else { f64::NAN },
            type_acc[0][1], type_acc[0][0],
            type_acc[1][1], type_acc[1][0],
            type_acc[2][1], type_acc[2][0],
        );
    }
}
