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

    for lr in [0.05, 0.1, 0.2, 0.5] {
        for epochs in [300usize, 800] {
            for l2 in [0.0, 1e-4, 1e-3] {
                let cc = ClassifierConfig {
                    epochs,
                    learning_rate: lr,
                    l2,
                    ..ClassifierConfig::default()
                };
                let (params, acc) =
                    train_classifier(&vocab, &prepared.classifier_examples, &cc).unwrap();
                // accuracy + confidence profile on the *eval* queries
                let mut correct = 0usize;
                let mut correct_conf = Vec::new();
                let mut wrong_conf = Vec::new();
                for q in &prepared.eval_queries {
                    let body = vocab.encode_text(&q.question, 512);
                    let d = predict_proba(&params, &body).unwrap();
                    if d.predicted_class == q.gold_category {
                        correct += 1;
                        correct_conf.push(d.max_prob);
                    } else {
                        wrong_conf.push(d.max_prob);
                    }
                }
                let mean = |v: &[f64]| {
                    if v.is_empty() {
                        f64::NAN
                    } else {
                        v.iter().sum::<f64>() / v.len() as f64
                    }
                };
                println!(
                    "lr {lr:<5} epochs {epochs:<4} l2 {l2:<7}: heldout {acc:.3}, eval acc {:.3} ({correct}/44), conf(correct) {:.2}, conf(wrong) {:.2}",
                    correct as f64 / prepared.eval_queries.len() as f64,
                    mean(&correct_conf),
                    mean(&wrong_conf),
                );
            }
        }
    }
}
