//! Question-category classifier and control-token gating.
//!
//! Multinomial logistic regression over bag-of-token-count features: probs =
//! softmax(W^T x + b). [`assign_ct`] turns a decision into a control token,
//! falling back to the CT-unknown when the maximum class probability misses
//! the threshold. The threshold comparison is inclusive (`>=`), so a
//! threshold of 0 always trusts the classifier.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::util::{self, fnv1a_hex};
use crate::vocab::{ControlToken, TokenSeq, Vocab};

const CLASSIFIER_VERSION: u32 = 1;

/// Training settings for the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 regularization strength on the weight matrix.
    pub l2: f64,
    pub seed: u64,
    /// Fraction of examples held out (seeded, stratified by class) for the
    /// reported accuracy.
    pub heldout_fraction: f64,
    /// Weight bag counts by inverse document frequency estimated on the
    /// training split. Off by default: plain counts.
    pub tf_idf: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 800,
            learning_rate: 0.5,
            l2: 1e-3,
            seed: 42,
            heldout_fraction: 0.2,
            tf_idf: false,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::ConfigInvalid("classifier epochs must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::ConfigInvalid(
                "classifier learning_rate must be positive".into(),
            ));
        }
        if self.l2 < 0.0 || !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(Error::ConfigInvalid(
                "classifier l2 must be >= 0 and heldout_fraction in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Trained classifier: `[vocab_size x C]` weights, `[C]` bias, and the class
/// order (sorted labels, matching the vocabulary's registered CTs). When
/// trained with TF-IDF features, `idf` holds the per-token weights estimated
/// on the training split (applied identically at inference).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub classes: Vec<String>,
    pub vocab_hash: String,
    pub idf: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    version: u32,
    classes: Vec<String>,
    weights: Matrix,
    bias: Vec<f64>,
    vocab_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    idf: Option<Vec<f64>>,
}

/// Classifier output for one question, before thresholding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtDecision {
    pub predicted_class: String,
    pub max_prob: f64,
    pub probs: Vec<f64>,
}

fn bag_of_counts(seq: &TokenSeq) -> BTreeMap<u32, f64> {
    let mut counts = BTreeMap::new();
    for &id in &seq.ids {
        *counts.entry(id).or_insert(0.0) += 1.0;
    }
    counts
}

fn apply_idf(counts: &mut BTreeMap<u32, f64>, idf: &[f64]) {
    for (id, value) in counts.iter_mut() {
        *value *= idf[*id as usize];
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
}

fn class_probs(params: &ClassifierParams, counts: &BTreeMap<u32, f64>) -> Vec<f64> {
    let mut logits = params.bias.clone();
    for (&id, &count) in counts {
        let row = params.weights.row(id as usize);
        for (l, w) in logits.iter_mut().zip(row) {
            *l += count * w;
        }
    }
    softmax_in_place(&mut logits);
    logits
}

/// Train by full-batch gradient descent on the cross-entropy of
/// softmax(W^T x + b) over bag-of-count features, with L2 on W. Returns the
/// parameters and the held-out accuracy (accuracy over the training set when
/// the held-out split is empty). Deterministic under the config seed.
pub fn train_classifier(
    vocab: &Vocab,
    examples: &[(TokenSeq, String)],
    config: &ClassifierConfig,
) -> Result<(ClassifierParams, f64)> {
    config.validate()?;
    let classes = vocab.ct_classes();
    if classes.is_empty() {
        return Err(Error::ConfigInvalid(
            "vocabulary has no registered control tokens".into(),
        ));
    }
    if examples.is_empty() {
        return Err(Error::ConfigInvalid("no classifier examples".into()));
    }
    let class_index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    for (_, label) in examples {
        if !class_index.contains_key(label.as_str()) {
            return Err(Error::UnregisteredLabel(label.clone()));
        }
    }
    let distinct: std::collections::BTreeSet<&str> =
        examples.iter().map(|(_, l)| l.as_str()).collect();
    if distinct.len() < 2 {
        return Err(Error::SingleClassCorpus(
            distinct.iter().next().unwrap_or(&"").to_string(),
        ));
    }

    // Seeded stratified split: within each class, shuffle then hold out the
    // requested fraction (rounded down; classes with one example are never
    // held out).
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (_, label)) in examples.iter().enumerate() {
        by_class.entry(class_index[label.as_str()]).or_default().push(i);
    }
    let mut rng = Rng::new(config.seed).derive("classifier-split");
    let mut train_idx = Vec::new();
    let mut heldout_idx = Vec::new();
    for (_, mut idxs) in by_class {
        rng.shuffle(&mut idxs);
        let n_held = ((idxs.len() as f64) * config.heldout_fraction).floor() as usize;
        let n_held = n_held.min(idxs.len().saturating_sub(1));
        heldout_idx.extend_from_slice(&idxs[..n_held]);
        train_idx.extend_from_slice(&idxs[n_held..]);
    }
    train_idx.sort_unstable();
    heldout_idx.sort_unstable();

    let n_classes = classes.len();
    let mut features: Vec<BTreeMap<u32, f64>> = examples
        .iter()
        .map(|(seq, _)| bag_of_counts(seq))
        .collect();
    let labels: Vec<usize> = examples
        .iter()
        .map(|(_, l)| class_index[l.as_str()])
        .collect();

    // Optional inverse-document-frequency weighting, estimated on the
    // training split only and applied to every example.
    let idf = if config.tf_idf {
        let mut df = vec![0usize; vocab.len()];
        for &i in &train_idx {
            for id in features[i].keys() {
                df[*id as usize] += 1;
            }
        }
        let n = train_idx.len() as f64;
        let idf: Vec<f64> = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        for counts in &mut features {
            apply_idf(counts, &idf);
        }
        Some(idf)
    } else {
        None
    };

    let mut params = ClassifierParams {
        weights: Matrix::zeros(vocab.len(), n_classes),
        bias: vec![0.0; n_classes],
        classes: classes.clone(),
        vocab_hash: vocab.content_hash(),
        idf,
    };

    let n_train = train_idx.len() as f64;
    for _ in 0..config.epochs {
        let mut grad_w: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut grad_b = vec![0.0; n_classes];
        for &i in &train_idx {
            let mut probs = class_probs(&params, &features[i]);
            probs[labels[i]] -= 1.0; // dCE/dlogit = p - y
            for (g, d) in grad_b.iter_mut().zip(&probs) {
                *g += d;
            }
            for (&id, &count) in &features[i] {
                let entry = grad_w.entry(id).or_insert_with(|| vec![0.0; n_classes]);
                for (g, d) in entry.iter_mut().zip(&probs) {
                    *g += count * d;
                }
            }
        }
        let lr = config.learning_rate;
        for (id, grad) in &grad_w {
            let row = params.weights.row_mut(*id as usize);
            for (w, g) in row.iter_mut().zip(grad) {
                *w -= lr * (g / n_train);
            }
        }
        if config.l2 > 0.0 {
            let decay = lr * config.l2;
            for w in &mut params.weights.data {
                *w -= decay * *w;
            }
        }
        for (b, g) in params.bias.iter_mut().zip(&grad_b) {
            *b -= lr * (g / n_train);
        }
    }

    let eval_idx: &[usize] = if heldout_idx.is_empty() {
        &train_idx
    } else {
        &heldout_idx
    };
    let correct = eval_idx
        .iter()
        .filter(|&&i| {
            let probs = class_probs(&params, &features[i]);
            argmax(&probs) == labels[i]
        })
        .count();
    let accuracy = correct as f64 / eval_idx.len() as f64;
    Ok((params, accuracy))
}

/// Index of the largest probability; the first (lexicographically smallest
/// class, since classes are sorted) wins ties.
fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Class probabilities for one question; the threshold is not applied here.
pub fn predict_proba(params: &ClassifierParams, question: &TokenSeq) -> Result<CtDecision> {
    if question.is_empty() {
        return Err(Error::EmptyQuestion);
    }
    let mut counts = bag_of_counts(question);
    if let Some(idf) = &params.idf {
        apply_idf(&mut counts, idf);
    }
    let probs = class_probs(params, &counts);
    let best = argmax(&probs);
    Ok(CtDecision {
        predicted_class: params.classes[best].clone(),
        max_prob: probs[best],
        probs,
    })
}

/// Gate a decision: the predicted class when `max_prob >= threshold`,
/// otherwise the CT-unknown fallback.
pub fn assign_ct(decision: &CtDecision, threshold: f64) -> ControlToken {
    debug_assert!((0.0..=1.0).contains(&threshold));
    if decision.max_prob >= threshold {
        ControlToken::Class(decision.predicted_class.clone())
    } else {
        ControlToken::Unknown
    }
}

impl ClassifierParams {
    pub fn ensure_vocab(&self, vocab: &Vocab) -> Result<()> {
        let got = vocab.content_hash();
        if got != self.vocab_hash {
            return Err(Error::VocabMismatch {
                context: "classifier vs vocabulary".into(),
                expected: self.vocab_hash.clone(),
                got,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&ClassifierFile {
            version: CLASSIFIER_VERSION,
            classes: self.classes.clone(),
            weights: self.weights.clone(),
            bias: self.bias.clone(),
            vocab_hash: self.vocab_hash.clone(),
            idf: self.idf.clone(),
        })
        .expect("classifier serialization cannot fail")
    }

    pub fn content_hash(&self) -> String {
        fnv1a_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ClassifierFile {
            version: CLASSIFIER_VERSION,
            classes: self.classes.clone(),
            weights: self.weights.clone(),
            bias: self.bias.clone(),
            vocab_hash: self.vocab_hash.clone(),
            idf: self.idf.clone(),
        };
        util::write_json_file(path, &file)
    }

    pub fn load(path: &Path) -> Result<ClassifierParams> {
        let file: ClassifierFile = util::read_json_file(path)?;
        if file.version != CLASSIFIER_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: "classifier checkpoint".into(),
                found: file.version,
                expected: CLASSIFIER_VERSION,
            });
        }
        let params = ClassifierParams {
            weights: file.weights,
            bias: file.bias,
            classes: file.classes,
            vocab_hash: file.vocab_hash,
            idf: file.idf,
        };
        if params.weights.cols != params.classes.len() || params.bias.len() != params.classes.len()
        {
            return Err(Error::ShapeMismatch(
                "classifier weights/bias/classes disagree".into(),
            ));
        }
        if !params.weights.is_finite() || !params.bias.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("classifier parameters".into()));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ct_vocab(texts: &[&str], classes: &[&str]) -> Vocab {
        Vocab::build(texts, 1, None)
            .unwrap()
            .register_control_tokens(classes)
            .unwrap()
    }

    fn example(vocab: &Vocab, text: &str, label: &str) -> (TokenSeq, String) {
        (vocab.encode_text(text, 64), label.to_string())
    }

    #[test]
    fn uniform_params_predict_first_class() {
        let vocab = ct_vocab(&["w1 w2"], &["delta", "alpha", "gamma", "beta"]);
        let params = ClassifierParams {
            weights: Matrix::zeros(vocab.len(), 4),
            bias: vec![0.0; 4],
            classes: vocab.ct_classes(),
            vocab_hash: vocab.content_hash(),
            idf: None,
        };
        let decision = predict_proba(&params, &vocab.encode_text("w1", 8)).unwrap();
        for p in &decision.probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
        // Classes are sorted, so the lexicographically first wins the tie.
        assert_eq!(decision.predicted_class, "alpha");
        assert!((decision.max_prob - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hand_built_weights_select_their_class() {
        let vocab = ct_vocab(&["taxword landword"], &["land", "tax"]);
        let mut weights = Matrix::zeros(vocab.len(), 2);
        let tax_id = vocab.token_id("taxword").unwrap() as usize;
        weights.set(tax_id, 1, 5.0); // "tax" is class index 1 (sorted after "land")
        let params = ClassifierParams {
            weights,
            bias: vec![0.0; 2],
            classes: vocab.ct_classes(),
            vocab_hash: vocab.content_hash(),
            idf: None,
        };
        let decision = predict_proba(&params, &vocab.encode_text("taxword", 8)).unwrap();
        assert_eq!(decision.predicted_class, "tax");
        assert!(decision.max_prob > 0.99);
    }

    #[test]
    fn probs_sum_to_one() {
        let vocab = ct_vocab(&["a b c d e"], &["x", "y", "z"]);
        let mut rng = Rng::new(3);
        let mut weights = Matrix::zeros(vocab.len(), 3);
        for v in &mut weights.data {
            *v = rng.uniform(-2.0, 2.0);
        }
        let params = ClassifierParams {
            weights,
            bias: vec![0.3, -0.7, 0.1],
            classes: vocab.ct_classes(),
            vocab_hash: vocab.content_hash(),
            idf: None,
        };
        for text in ["a", "a b", "c d e", "e e e e"] {
            let d = predict_proba(&params, &vocab.encode_text(text, 8)).unwrap();
            let total: f64 = d.probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!((d.max_prob - d.probs.iter().cloned().fold(f64::MIN, f64::max)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_question_is_rejected() {
        let vocab = ct_vocab(&["a"], &["x", "y"]);
        let params = ClassifierParams {
            weights: Matrix::zeros(vocab.len(), 2),
            bias: vec![0.0; 2],
            classes: vocab.ct_classes(),
            vocab_hash: vocab.content_hash(),
            idf: None,
        };
        let empty = TokenSeq {
            ids: vec![],
            truncated: false,
        };
        assert!(matches!(
            predict_proba(&params, &empty),
            Err(Error::EmptyQuestion)
        ));
    }

    #[test]
    fn linearly_separable_corpus_reaches_full_heldout_accuracy() {
        // Disjoint vocabulary per class: perfectly separable.
        let vocab = ct_vocab(
            &["suna sunb sunc moona moonb moonc"],
            &["moon", "sun"],
        );
        let mut examples = Vec::new();
        for i in 0..10 {
            let sun_word = ["suna", "sunb", "sunc"][i % 3];
            let moon_word = ["moona", "moonb", "moonc"][i % 3];
            examples.push(example(&vocab, &format!("{sun_word} {sun_word}"), "sun"));
            examples.push(example(&vocab, moon_word, "moon"));
        }
        let (params, accuracy) =
            train_classifier(&vocab, &examples, &ClassifierConfig::default()).unwrap();
        assert!((accuracy - 1.0).abs() < 1e-12, "held-out accuracy {accuracy}");
        let d = predict_proba(&params, &vocab.encode_text("suna sunc", 8)).unwrap();
        assert_eq!(d.predicted_class, "sun");
    }

    #[test]
    fn single_class_corpus_is_rejected() {
        let vocab = ct_vocab(&["w"], &["only", "other"]);
        let examples = vec![example(&vocab, "w", "only"), example(&vocab, "w", "only")];
        assert!(matches!(
            train_classifier(&vocab, &examples, &ClassifierConfig::default()),
            Err(Error::SingleClassCorpus(label)) if label == "only"
        ));
    }

    #[test]
    fn unregistered_label_is_rejected() {
        let vocab = ct_vocab(&["w"], &["a", "b"]);
        let examples = vec![example(&vocab, "w", "a"), example(&vocab, "w", "zzz")];
        assert!(matches!(
            train_classifier(&vocab, &examples, &ClassifierConfig::default()),
            Err(Error::UnregisteredLabel(label)) if label == "zzz"
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let vocab = ct_vocab(&["qa qb qc qd"], &["c1", "c2"]);
        let examples = vec![
            example(&vocab, "qa qb", "c1"),
            example(&vocab, "qa", "c1"),
            example(&vocab, "qc qd", "c2"),
            example(&vocab, "qd", "c2"),
            example(&vocab, "qb qa", "c1"),
            example(&vocab, "qc", "c2"),
        ];
        let config = ClassifierConfig::default();
        let (a, acc_a) = train_classifier(&vocab, &examples, &config).unwrap();
        let (b, acc_b) = train_classifier(&vocab, &examples, &config).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(acc_a, acc_b);
    }

    #[test]
    fn assign_ct_threshold_semantics() {
        let decision = CtDecision {
            predicted_class: "science".into(),
            max_prob: 0.85,
            probs: vec![0.85, 0.15],
        };
        // Threshold 0 never falls back.
        assert_eq!(
            assign_ct(&decision, 0.0),
            ControlToken::Class("science".into())
        );
        // Below threshold: fallback.
        assert_eq!(assign_ct(&decision, 0.9), ControlToken::Unknown);
        // Boundary is inclusive.
        let boundary = CtDecision {
            max_prob: 0.9,
            ..decision
        };
        assert_eq!(
            assign_ct(&boundary, 0.9),
            ControlToken::Class("science".into())
        );
    }

    #[test]
    fn raising_threshold_only_moves_labels_to_unknown() {
        let mut rng = Rng::new(8);
        let thresholds = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0];
        for _ in 0..50 {
            let p = rng.next_f64();
            let decision = CtDecision {
                predicted_class: "c".into(),
                max_prob: p,
                probs: vec![p, 1.0 - p],
            };
            let mut seen_unknown = false;
            for t in thresholds {
                match assign_ct(&decision, t) {
                    ControlToken::Class(_) => {
                        assert!(!seen_unknown, "label reappeared after fallback at t={t}");
                    }
                    ControlToken::Unknown => seen_unknown = true,
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let vocab = ct_vocab(&["qa qb qc qd"], &["c1", "c2"]);
        let examples = vec![
            example(&vocab, "qa qb", "c1"),
            example(&vocab, "qc qd", "c2"),
            example(&vocab, "qa", "c1"),
            example(&vocab, "qd", "c2"),
        ];
        let (params, _) = train_classifier(&vocab, &examples, &ClassifierConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("classifier.json");
        params.save(&path).unwrap();
        let loaded = ClassifierParams::load(&path).unwrap();
        assert_eq!(params, loaded);
        assert!(loaded.ensure_vocab(&vocab).is_ok());
    }
}
