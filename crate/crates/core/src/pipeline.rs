//! Corpus-to-artifacts assembly shared by the experiment runners and the
//! CLI: vocabulary construction, train/eval splitting, chunking, per-mode
//! training, indexing, and evaluation.
//!
//! Mode wiring, in both directions of the "with CT" switch:
//! - training pairs carry the gold category CT on query and passage;
//! - the index carries the gold category CT on every chunk;
//! - at query time the CT comes from the classifier (gated), the gold label
//!   (oracle), or nowhere (base).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::chunk::{chunk_around_answer, chunk_for_index, Chunk, DEFAULT_MAX_CHUNK_TOKENS};
use crate::classifier::{predict_proba, train_classifier, ClassifierConfig, ClassifierParams};
use crate::encoder::{DualEncoder, DEFAULT_D_EMB, DEFAULT_D_OUT};
use crate::error::{Error, Result};
use crate::eval::{top_n_accuracy, EvalMode, EvalQuery, EvalReport};
use crate::index::{
    build_index_with_mode, ensure_artifacts_match, retrieve_trusted, DenseIndex, QueryCt,
    RetrievalResult,
};
use crate::mrc::MrcRecord;
use crate::rng::Rng;
use crate::train::{train_retriever, TrainConfig};
use crate::vocab::{ControlToken, TokenSeq, Vocab};

/// Everything an end-to-end run needs, with defaults that train and evaluate
/// the default synthetic corpus in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub d_emb: usize,
    pub d_out: usize,
    pub max_chunk_tokens: usize,
    pub vocab_min_count: usize,
    pub vocab_max_size: Option<usize>,
    /// Fraction of records (stratified by category) held out as evaluation
    /// queries.
    pub eval_fraction: f64,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    /// Threshold grid for the sweep.
    pub thresholds: Vec<f64>,
    /// Accuracy cutoffs reported by the evaluator.
    pub ns: Vec<u32>,
    /// Threshold used for the CT side of the two-condition comparison.
    pub comparison_threshold: f64,
    /// Confidence gate applied when composing control tokens onto training
    /// queries: a query whose classifier confidence misses this threshold
    /// carries the `[unk]` fallback instead of its gold CT, mirroring the
    /// inference-time rule so below-threshold queries retrieve with a token
    /// the encoder was actually trained on. Passages always keep the gold
    /// CT.
    pub train_ct_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d_emb: DEFAULT_D_EMB,
            d_out: DEFAULT_D_OUT,
            max_chunk_tokens: DEFAULT_MAX_CHUNK_TOKENS,
            vocab_min_count: 1,
            vocab_max_size: None,
            eval_fraction: 0.2,
            split_seed: 7,
            train: TrainConfig::default(),
            classifier: ClassifierConfig::default(),
            thresholds: vec![0.0, 0.5, 0.7, 0.9],
            ns: vec![1, 5, 10, 15, 20],
            comparison_threshold: 0.9,
            train_ct_threshold: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_emb == 0 || self.d_out == 0 || self.max_chunk_tokens == 0 {
            return Err(Error::ConfigInvalid(
                "d_emb, d_out, and max_chunk_tokens must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::ConfigInvalid(
                "eval_fraction must be in [0, 1)".into(),
            ));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(Error::ConfigInvalid("ns must be non-empty, all >= 1".into()));
        }
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(Error::ConfigInvalid(
                "thresholds must be non-empty, all in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.comparison_threshold) {
            return Err(Error::ConfigInvalid(
                "comparison_threshold must be in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.train_ct_threshold) {
            return Err(Error::ConfigInvalid(
                "train_ct_threshold must be in [0, 1]".into(),
            ));
        }
        self.train.validate()?;
        self.classifier.validate()
    }

    /// Retrieval depth: deep enough to score every configured cutoff.
    pub fn retrieval_depth(&self) -> usize {
        self.ns.iter().copied().max().unwrap_or(20) as usize
    }
}

/// One training example: encoded question, encoded gold passage, and the
/// gold category (used when composing CTs in CT mode).
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub query_body: TokenSeq,
    pub positive_body: TokenSeq,
    pub category: String,
}

/// A corpus turned into model-ready pieces: shared vocabulary, split train
/// pairs and eval queries, full-coverage index chunks, and the chunk-id ->
/// text map the evaluator judges containment against.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub vocab: Vocab,
    pub categories: Vec<String>,
    pub train_examples: Vec<TrainExample>,
    pub classifier_examples: Vec<(TokenSeq, String)>,
    pub eval_queries: Vec<EvalQuery>,
    pub index_chunks: Vec<Chunk>,
    pub chunk_texts: HashMap<String, String>,
}

/// Build the corpus vocabulary (questions + contexts) and register each
/// category as a control token.
pub fn build_vocab_for(records: &[MrcRecord], config: &ExperimentConfig) -> Result<Vocab> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut texts: Vec<&str> = Vec::with_capacity(records.len() * 2);
    let mut seen_contexts = std::collections::HashSet::new();
    for record in records {
        texts.push(&record.question);
        if seen_contexts.insert(record.context.as_str()) {
            texts.push(&record.context);
        }
    }
    let categories: Vec<String> = unique_categories(records);
    Vocab::build(&texts, config.vocab_min_count, config.vocab_max_size)?
        .register_control_tokens(&categories)
}

fn unique_categories(records: &[MrcRecord]) -> Vec<String> {
    let set: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.category.as_str()).collect();
    set.into_iter().map(String::from).collect()
}

/// Seeded stratified split of record indices into (train, eval).
fn split_records(
    records: &[MrcRecord],
    eval_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_category.entry(r.category.as_str()).or_default().push(i);
    }
    let mut rng = Rng::new(seed).derive("corpus-split");
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (_, mut idxs) in by_category {
        rng.shuffle(&mut idxs);
        let mut n_eval = ((idxs.len() as f64) * eval_fraction).floor() as usize;
        n_eval = n_eval.min(idxs.len().saturating_sub(1));
        eval.extend_from_slice(&idxs[..n_eval]);
        train.extend_from_slice(&idxs[n_eval..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    (train, eval)
}

/// Turn records into model-ready pieces against an existing vocabulary.
/// Contexts are deduplicated (first appearance wins) into documents, which
/// are chunked for full index coverage; train-split records additionally get
/// answer-centric chunks as positives.
pub fn prepare(
    records: &[MrcRecord],
    config: &ExperimentConfig,
    vocab: &Vocab,
) -> Result<PreparedCorpus> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let categories = unique_categories(records);
    for category in &categories {
        if vocab.ct_id(category).is_none() {
            return Err(Error::UnknownClass(category.clone()));
        }
    }

    // Documents: deduplicated contexts in first-appearance order.
    let mut doc_of_context: HashMap<&str, usize> = HashMap::new();
    let mut doc_contexts: Vec<(&str, &str)> = Vec::new(); // (context, category)
    for record in records {
        if !doc_of_context.contains_key(record.context.as_str()) {
            doc_of_context.insert(record.context.as_str(), doc_contexts.len());
            doc_contexts.push((record.context.as_str(), record.category.as_str()));
        }
    }
    let mut index_chunks = Vec::new();
    for (doc_idx, (context, category)) in doc_contexts.iter().enumerate() {
        let doc_id = format!("d{doc_idx:04}");
        index_chunks.extend(chunk_for_index(
            &doc_id,
            context,
            category,
            config.max_chunk_tokens,
        )?);
    }
    let chunk_texts: HashMap<String, String> = index_chunks
        .iter()
        .map(|c| (c.chunk_id.clone(), c.text.clone()))
        .collect();

    let (train_idx, eval_idx) = split_records(records, config.eval_fraction, config.split_seed);

    let mut train_examples = Vec::with_capacity(train_idx.len());
    let mut classifier_examples = Vec::with_capacity(train_idx.len());
    for &i in &train_idx {
        let record = &records[i];
        let gold_chunk = chunk_around_answer(record, config.max_chunk_tokens)?;
        let query_body = vocab.encode_text(&record.question, config.max_chunk_tokens);
        let positive_body = vocab.encode_text(&gold_chunk.text, config.max_chunk_tokens);
        classifier_examples.push((query_body.clone(), record.category.clone()));
        train_examples.push(TrainExample {
            query_body,
            positive_body,
            category: record.category.clone(),
        });
    }

    let eval_queries = eval_idx
        .iter()
        .map(|&i| {
            let r = &records[i];
            EvalQuery {
                query_id: r.id.clone(),
                question: r.question.clone(),
                answer_text: r.answer_text.clone(),
                gold_category: r.category.clone(),
            }
        })
        .collect();

    Ok(PreparedCorpus {
        vocab: vocab.clone(),
        categories,
        train_examples,
        classifier_examples,
        eval_queries,
        index_chunks,
        chunk_texts,
    })
}

/// Train the dual encoder in one mode.
///
/// With `classifier` present (the CT condition), every pair carries the gold
/// category CT on the passage side, and the query side carries the gold CT
/// when the classifier's confidence on that query reaches
/// `config.train_ct_threshold`, else the `[unk]` fallback - the same gate
/// the inference pipeline applies, so the below-threshold population trains
/// the fallback path it will actually use. Without a classifier (the base
/// condition) no control token is composed anywhere.
pub fn train_retriever_mode(
    prepared: &PreparedCorpus,
    classifier: Option<&ClassifierParams>,
    config: &ExperimentConfig,
) -> Result<(DualEncoder, Vec<f64>)> {
    let mut pairs = Vec::with_capacity(prepared.train_examples.len());
    for example in &prepared.train_examples {
        let (query, positive) = match classifier {
            Some(classifier) => {
                let decision = predict_proba(classifier, &example.query_body)?;
                let query_ct = if decision.max_prob >= config.train_ct_threshold {
                    ControlToken::Class(example.category.clone())
                } else {
                    ControlToken::Unknown
                };
                let gold = ControlToken::Class(example.category.clone());
                (
                    prepared.vocab.compose_ct_input(&query_ct, &example.query_body)?,
                    prepared.vocab.compose_ct_input(&gold, &example.positive_body)?,
                )
            }
            None => (example.query_body.clone(), example.positive_body.clone()),
        };
        pairs.push((query, positive));
    }
    let encoder = DualEncoder::init(&prepared.vocab, config.d_emb, config.d_out, config.train.seed)?;
    train_retriever(encoder, &pairs, &config.train)
}

/// Index the prepared corpus's full-coverage chunks under one mode.
pub fn build_mode_index(
    prepared: &PreparedCorpus,
    encoder: &DualEncoder,
    with_ct: bool,
) -> Result<DenseIndex> {
    build_index_with_mode(encoder, &prepared.vocab, &prepared.index_chunks, with_ct)
}

/// Train the query-category classifier on the train split.
pub fn train_query_classifier(
    prepared: &PreparedCorpus,
    config: &ExperimentConfig,
) -> Result<(ClassifierParams, f64)> {
    train_classifier(
        &prepared.vocab,
        &prepared.classifier_examples,
        &config.classifier,
    )
}

/// Run every eval query through the retrieval pipeline under one mode and
/// score the results.
pub fn evaluate_mode(
    prepared: &PreparedCorpus,
    encoder: &DualEncoder,
    index: &DenseIndex,
    classifier: Option<&ClassifierParams>,
    mode: EvalMode,
    threshold: Option<f64>,
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    let results = retrieve_all(prepared, encoder, index, classifier, mode, threshold, config)?;
    top_n_accuracy(
        &results,
        &prepared.eval_queries,
        &prepared.chunk_texts,
        &config.ns,
        mode,
        threshold,
    )
}

/// Retrieval results for every eval query under one mode.
pub fn retrieve_all(
    prepared: &PreparedCorpus,
    encoder: &DualEncoder,
    index: &DenseIndex,
    classifier: Option<&ClassifierParams>,
    mode: EvalMode,
    threshold: Option<f64>,
    config: &ExperimentConfig,
) -> Result<Vec<RetrievalResult>> {
    ensure_artifacts_match(encoder, index, &prepared.vocab, classifier)?;
    let k = config.retrieval_depth();
    prepared
        .eval_queries
        .iter()
        .map(|query| {
            let ct = match mode {
                EvalMode::DprBase => QueryCt::None,
                EvalMode::Cdpr => QueryCt::Classified {
                    threshold: threshold.ok_or_else(|| {
                        Error::ConfigInvalid("cdpr evaluation needs a threshold".into())
                    })?,
                },
                EvalMode::CdprOracleCt => {
                    QueryCt::Fixed(ControlToken::Class(query.gold_category.clone()))
                }
            };
            retrieve_trusted(
                encoder,
                classifier,
                index,
                &prepared.vocab,
                &query.query_id,
                &query.question,
                &ct,
                k,
                config.max_chunk_tokens,
            )
        })
        .collect()
}

/// Everything the acceptance experiments look at for one corpus: the base
/// condition, the CT condition across the threshold grid, and the gold-CT
/// oracle, all over identical data and seeds.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub base: EvalReport,
    pub sweep: Vec<EvalReport>,
    pub oracle: EvalReport,
    pub classifier_heldout_accuracy: f64,
    pub base_loss_trace: Vec<f64>,
    pub cdpr_loss_trace: Vec<f64>,
}

/// Train both conditions once and evaluate base, per-threshold CT, and the
/// gold-CT oracle.
pub fn run_full_experiment(
    records: &[MrcRecord],
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let vocab = build_vocab_for(records, config)?;
    let prepared = prepare(records, config, &vocab)?;

    let (base_encoder, base_loss_trace) = train_retriever_mode(&prepared, None, config)?;
    let base_index = build_mode_index(&prepared, &base_encoder, false)?;
    let base = evaluate_mode(
        &prepared,
        &base_encoder,
        &base_index,
        None,
        EvalMode::DprBase,
        None,
        config,
    )?;

    let (classifier, classifier_heldout_accuracy) = train_query_classifier(&prepared, config)?;
    let (ct_encoder, cdpr_loss_trace) = train_retriever_mode(&prepared, Some(&classifier), config)?;
    let ct_index = build_mode_index(&prepared, &ct_encoder, true)?;

    let sweep = config
        .thresholds
        .iter()
        .map(|&t| {
            evaluate_mode(
                &prepared,
                &ct_encoder,
                &ct_index,
                Some(&classifier),
                EvalMode::Cdpr,
                Some(t),
                config,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let oracle = evaluate_mode(
        &prepared,
        &ct_encoder,
        &ct_index,
        None,
        EvalMode::CdprOracleCt,
        None,
        config,
    )?;

    Ok(ExperimentOutcome {
        base,
        sweep,
        oracle,
        classifier_heldout_accuracy,
        base_loss_trace,
        cdpr_loss_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn tiny_corpus() -> (Vec<MrcRecord>, ExperimentConfig) {
        let synth = SynthConfig {
            n_domains: 3,
            docs_per_domain: 4,
            sentences_per_doc: 4,
            queries_per_domain: 6,
            shared_vocab_size: 20,
            domain_vocab_size: 10,
            ambiguity_rate: 0.7,
            seed: 5,
        };
        let (records, _) = generate(&synth).unwrap();
        let config = ExperimentConfig {
            d_emb: 8,
            d_out: 8,
            train: TrainConfig {
                batch_size: 4,
                epochs: 4,
                ..TrainConfig::default()
            },
            classifier: ClassifierConfig {
                epochs: 50,
                ..ClassifierConfig::default()
            },
            ..ExperimentConfig::default()
        };
        (records, config)
    }

    #[test]
    fn prepare_splits_stratified_and_covers_index() {
        let (records, config) = tiny_corpus();
        let vocab = build_vocab_for(&records, &config).unwrap();
        let prepared = prepare(&records, &config, &vocab).unwrap();
        // 6 queries per domain, eval_fraction 0.2 -> floor(1.2) = 1 eval per
        // domain.
        assert_eq!(prepared.eval_queries.len(), 3);
        assert_eq!(prepared.train_examples.len(), 15);
        // Each domain contributes exactly one eval query.
        let cats: std::collections::BTreeSet<&str> = prepared
            .eval_queries
            .iter()
            .map(|q| q.gold_category.as_str())
            .collect();
        assert_eq!(cats.len(), 3);
        // Deduplicated docs: 4 distinct topics per domain were queried.
        assert_eq!(prepared.index_chunks.len(), prepared.chunk_texts.len());
        assert!(!prepared.index_chunks.is_empty());
        // Chunk token budget honored.
        for c in &prepared.index_chunks {
            assert!(c.token_count <= config.max_chunk_tokens);
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (records, config) = tiny_corpus();
        let (train_a, eval_a) = split_records(&records, config.eval_fraction, config.split_seed);
        let (train_b, eval_b) = split_records(&records, config.eval_fraction, config.split_seed);
        assert_eq!(train_a, train_b);
        assert_eq!(eval_a, eval_b);
        let overlap: Vec<_> = train_a.iter().filter(|i| eval_a.contains(i)).collect();
        assert!(overlap.is_empty());
        assert_eq!(train_a.len() + eval_a.len(), records.len());
    }

    #[test]
    fn full_experiment_runs_and_is_deterministic() {
        let (records, config) = tiny_corpus();
        let a = run_full_experiment(&records, &config).unwrap();
        let b = run_full_experiment(&records, &config).unwrap();
        assert_eq!(a.base, b.base);
        assert_eq!(a.sweep, b.sweep);
        assert_eq!(a.oracle, b.oracle);
        assert_eq!(
            a.classifier_heldout_accuracy,
            b.classifier_heldout_accuracy
        );
        // Reports carry the right modes and thresholds.
        assert_eq!(a.base.mode, EvalMode::DprBase);
        assert_eq!(a.sweep.len(), config.thresholds.len());
        for (report, &t) in a.sweep.iter().zip(&config.thresholds) {
            assert_eq!(report.mode, EvalMode::Cdpr);
            assert_eq!(report.threshold, Some(t));
        }
        assert_eq!(a.oracle.mode, EvalMode::CdprOracleCt);
        // Accuracies are valid fractions, non-decreasing in N.
        for report in a.sweep.iter().chain([&a.base, &a.oracle]) {
            let vals: Vec<f64> = report.top_n_accuracy.values().copied().collect();
            for w in vals.windows(2) {
                assert!(w[0] <= w[1]);
            }
            for v in vals {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
