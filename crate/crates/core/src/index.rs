//! Exact dense index and the retrieval pipeline.
//!
//! Passages are encoded by the passage tower over CT-composed token
//! sequences (gold category control token prepended); queries come in
//! through [`retrieve`], which picks the query-side control token by mode:
//! none (plain similarity), a fixed token (gold-CT oracle), or the
//! classifier's thresholded prediction. Search is an exhaustive dot-product
//! scan over 64-bit scores with ties broken by ascending chunk id, so
//! results are exactly reproducible.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunk::Chunk;
use crate::classifier::{assign_ct, predict_proba, ClassifierParams};
use crate::encoder::{DualEncoder, Tower};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::util::{self, fnv1a_hex};
use crate::vocab::{ControlToken, Vocab};

const INDEX_VERSION: u32 = 1;

/// Per-chunk metadata stored alongside the vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkMeta {
    pub doc_id: String,
    pub category: String,
}

/// Dense vector index over encoded chunks, bound to the exact encoder
/// checkpoint that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    pub vectors: Matrix,
    pub chunk_ids: Vec<String>,
    pub metadata: Vec<ChunkMeta>,
    pub encoder_hash: String,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    version: u32,
    encoder_hash: String,
    d_out: usize,
    n: usize,
    vectors: Matrix,
    chunk_ids: Vec<String>,
    metadata: Vec<ChunkMeta>,
}

/// One ranked hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: String,
    pub score: f64,
}

/// Ranked retrieval output for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    /// Control token used on the query side; absent in plain (no-CT) mode.
    pub assigned_ct: Option<ControlToken>,
    pub ranked: Vec<ScoredChunk>,
}

/// Query-side control-token policy.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryCt {
    /// No CT composed: plain dense retrieval.
    None,
    /// A caller-chosen token (the gold-CT oracle uses this).
    Fixed(ControlToken),
    /// Classifier prediction gated by the threshold.
    Classified { threshold: f64 },
}

/// Encode chunks with the passage tower, each prefixed with its gold
/// category control token, preserving chunk order.
pub fn build_index(encoder: &DualEncoder, vocab: &Vocab, chunks: &[Chunk]) -> Result<DenseIndex> {
    build_index_with_mode(encoder, vocab, chunks, true)
}

/// Index builder with the CT switch exposed: `compose_ct = false` is the
/// base-model ablation where chunks are encoded without any control token.
pub fn build_index_with_mode(
    encoder: &DualEncoder,
    vocab: &Vocab,
    chunks: &[Chunk],
    compose_ct: bool,
) -> Result<DenseIndex> {
    if chunks.is_empty() {
        return Err(Error::EmptyChunks);
    }
    encoder.ensure_vocab(vocab)?;
    let mut vectors = Matrix::zeros(chunks.len(), encoder.d_out());
    let mut chunk_ids = Vec::with_capacity(chunks.len());
    let mut metadata = Vec::with_capacity(chunks.len());
    for (i, chunk) in chunks.iter().enumerate() {
        let body = vocab.encode_text(&chunk.text, usize::MAX);
        let seq = if compose_ct {
            vocab.compose_ct_input(&ControlToken::Class(chunk.category.clone()), &body)?
        } else {
            body
        };
        let vec = encoder.embed(Tower::Passage, &seq)?;
        vectors.row_mut(i).copy_from_slice(&vec);
        chunk_ids.push(chunk.chunk_id.clone());
        metadata.push(ChunkMeta {
            doc_id: chunk.doc_id.clone(),
            category: chunk.category.clone(),
        });
    }
    Ok(DenseIndex {
        vectors,
        chunk_ids,
        metadata,
        encoder_hash: encoder.content_hash(),
    })
}

/// Exhaustive top-k scan: scores every indexed vector against the query,
/// sorts by score descending with ties broken by ascending chunk id, and
/// returns the first `min(k, N)` entries.
pub fn search(index: &DenseIndex, q_vec: &[f64], k: usize) -> Result<Vec<ScoredChunk>> {
    if k == 0 {
        return Err(Error::ConfigInvalid("k must be >= 1".into()));
    }
    if q_vec.len() != index.vectors.cols {
        return Err(Error::DimensionMismatch {
            left: q_vec.len(),
            right: index.vectors.cols,
        });
    }
    if !q_vec.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("query vector".into()));
    }
    let mut scored: Vec<(usize, f64)> = (0..index.vectors.rows)
        .map(|i| (i, dot(index.vectors.row(i), q_vec)))
        .collect();
    if scored.iter().any(|(_, s)| !s.is_finite()) {
        return Err(Error::NonFinite("index scores".into()));
    }
    scored.sort_by(|(ia, sa), (ib, sb)| {
        sb.partial_cmp(sa)
            .expect("scores checked finite")
            .then_with(|| index.chunk_ids[*ia].cmp(&index.chunk_ids[*ib]))
    });
    Ok(scored
        .into_iter()
        .take(k.min(index.vectors.rows))
        .map(|(i, score)| ScoredChunk {
            chunk_id: index.chunk_ids[i].clone(),
            score,
        })
        .collect())
}

/// Check that encoder, index, vocabulary, and (when present) classifier all
/// belong together before querying.
pub fn ensure_artifacts_match(
    encoder: &DualEncoder,
    index: &DenseIndex,
    vocab: &Vocab,
    classifier: Option<&ClassifierParams>,
) -> Result<()> {
    encoder.ensure_vocab(vocab)?;
    if let Some(classifier) = classifier {
        classifier.ensure_vocab(vocab)?;
    }
    let encoder_hash = encoder.content_hash();
    if index.encoder_hash != encoder_hash {
        return Err(Error::VocabMismatch {
            context: "index vs encoder checkpoint".into(),
            expected: index.encoder_hash.clone(),
            got: encoder_hash,
        });
    }
    Ok(())
}

/// Full query pipeline: tokenize the question, pick the control token per
/// `ct` policy, compose, encode with the question tower, and search. All
/// artifact hashes are checked first so a stale checkpoint or foreign
/// vocabulary fails fast instead of silently skewing results.
#[allow(clippy::too_many_arguments)]
pub fn retrieve(
    encoder: &DualEncoder,
    classifier: Option<&ClassifierParams>,
    index: &DenseIndex,
    vocab: &Vocab,
    query_id: &str,
    question: &str,
    ct: &QueryCt,
    k: usize,
    max_tokens: usize,
) -> Result<RetrievalResult> {
    ensure_artifacts_match(encoder, index, vocab, classifier)?;
    retrieve_trusted(
        encoder, classifier, index, vocab, query_id, question, ct, k, max_tokens,
    )
}

/// [`retrieve`] without the artifact-hash checks, for batch callers that
/// validate once up front.
#[allow(clippy::too_many_arguments)]
pub fn retrieve_trusted(
    encoder: &DualEncoder,
    classifier: Option<&ClassifierParams>,
    index: &DenseIndex,
    vocab: &Vocab,
    query_id: &str,
    question: &str,
    ct: &QueryCt,
    k: usize,
    max_tokens: usize,
) -> Result<RetrievalResult> {
    let body = vocab.encode_text(question, max_tokens);
    if body.is_empty() {
        return Err(Error::EmptyQuestion);
    }
    let assigned_ct = match ct {
        QueryCt::None => None,
        QueryCt::Fixed(token) => Some(token.clone()),
        QueryCt::Classified { threshold } => {
            let classifier = classifier
                .ok_or_else(|| Error::CheckpointMissing("classifier checkpoint".into()))?;
            let decision = predict_proba(classifier, &body)?;
            Some(assign_ct(&decision, *threshold))
        }
    };
    let seq = match &assigned_ct {
        Some(token) => vocab.compose_ct_input(token, &body)?,
        None => body,
    };
    let q_vec = encoder.embed(Tower::Question, &seq)?;
    let ranked = search(index, &q_vec, k)?;
    Ok(RetrievalResult {
        query_id: query_id.to_string(),
        assigned_ct,
        ranked,
    })
}

/// The classifier-gated pipeline (classification -> CT composition ->
/// question-tower encoding -> search).
#[allow(clippy::too_many_arguments)]
pub fn retrieve_with_ct(
    encoder: &DualEncoder,
    classifier: &ClassifierParams,
    index: &DenseIndex,
    vocab: &Vocab,
    query_id: &str,
    question: &str,
    threshold: f64,
    k: usize,
    max_tokens: usize,
) -> Result<RetrievalResult> {
    retrieve(
        encoder,
        Some(classifier),
        index,
        vocab,
        query_id,
        question,
        &QueryCt::Classified { threshold },
        k,
        max_tokens,
    )
}

/// Serialize retrieval results as JSONL
/// (`{query_id, assigned_ct, ranked: [{chunk_id, score}]}` per line).
pub fn results_to_jsonl(results: &[RetrievalResult]) -> String {
    let mut out = String::new();
    for result in results {
        out.push_str(&serde_json::to_string(result).expect("result serialization cannot fail"));
        out.push('\n');
    }
    out
}

impl DenseIndex {
    pub fn len(&self) -> usize {
        self.vectors.rows
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows == 0
    }

    pub fn d_out(&self) -> usize {
        self.vectors.cols
    }

    fn to_file(&self) -> IndexFile {
        IndexFile {
            version: INDEX_VERSION,
            encoder_hash: self.encoder_hash.clone(),
            d_out: self.d_out(),
            n: self.len(),
            vectors: self.vectors.clone(),
            chunk_ids: self.chunk_ids.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_file()).expect("index serialization cannot fail")
    }

    pub fn content_hash(&self) -> String {
        fnv1a_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json_file(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<DenseIndex> {
        let file: IndexFile = util::read_json_file(path)?;
        if file.version != INDEX_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: "index".into(),
                found: file.version,
                expected: INDEX_VERSION,
            });
        }
        let index = DenseIndex {
            vectors: file.vectors,
            chunk_ids: file.chunk_ids,
            metadata: file.metadata,
            encoder_hash: file.encoder_hash,
        };
        if index.vectors.rows != file.n
            || index.vectors.cols != file.d_out
            || index.chunk_ids.len() != file.n
            || index.metadata.len() != file.n
        {
            return Err(Error::ShapeMismatch("index container inconsistent".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &index.chunk_ids {
            if !seen.insert(id) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    detail: format!("duplicate chunk_id `{id}`"),
                });
            }
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn chunk(id: &str, text: &str, category: &str) -> Chunk {
        Chunk {
            chunk_id: id.to_string(),
            doc_id: format!("doc-{id}"),
            text: text.to_string(),
            category: category.to_string(),
            token_count: crate::vocab::count_tokens(text),
            char_span: (0, text.chars().count()),
        }
    }

    fn setup() -> (Vocab, DualEncoder, Vec<Chunk>) {
        let vocab = Vocab::build(
            &["alpha beta gamma delta epsilon zeta eta theta"],
            1,
            None,
        )
        .unwrap()
        .register_control_tokens(&["land", "science"])
        .unwrap();
        let encoder = DualEncoder::init(&vocab, 8, 8, 42).unwrap();
        let chunks = vec![
            chunk("c0", "alpha beta.", "science"),
            chunk("c1", "gamma delta.", "science"),
            chunk("c2", "epsilon zeta.", "land"),
        ];
        (vocab, encoder, chunks)
    }

    /// Independent exhaustive oracle: recompute every dot product with a
    /// plain loop and sort with the documented tie-break.
    fn oracle_scan(index: &DenseIndex, q: &[f64], k: usize) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = (0..index.len())
            .map(|i| {
                let row = index.vectors.row(i);
                let mut s = 0.0;
                for (a, b) in row.iter().zip(q) {
                    s += a * b;
                }
                (index.chunk_ids[i].clone(), s)
            })
            .collect();
        all.sort_by(|(ida, sa), (idb, sb)| {
            sb.partial_cmp(sa).unwrap().then_with(|| ida.cmp(idb))
        });
        all.truncate(k.min(index.len()));
        all
    }

    #[test]
    fn single_chunk_index_always_returns_it() {
        let (vocab, encoder, chunks) = setup();
        let index = build_index(&encoder, &vocab, &chunks[..1]).unwrap();
        assert_eq!(index.len(), 1);
        let result = retrieve(
            &encoder, None, &index, &vocab, "q", "anything here", &QueryCt::None, 5, 64,
        )
        .unwrap();
        assert_eq!(result.ranked.len(), 1);
        assert_eq!(result.ranked[0].chunk_id, "c0");
    }

    #[test]
    fn same_text_different_category_gets_different_vectors() {
        let (vocab, encoder, _) = setup();
        let twins = vec![
            chunk("t0", "alpha beta.", "science"),
            chunk("t1", "alpha beta.", "land"),
        ];
        let index = build_index(&encoder, &vocab, &twins).unwrap();
        assert_ne!(index.vectors.row(0), index.vectors.row(1));
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let (vocab, encoder, chunks) = setup();
        let a = build_index(&encoder, &vocab, &chunks).unwrap();
        let b = build_index(&encoder, &vocab, &chunks).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn unknown_category_is_rejected() {
        let (vocab, encoder, _) = setup();
        let bad = vec![chunk("c0", "alpha.", "unregistered")];
        assert!(matches!(
            build_index(&encoder, &vocab, &bad),
            Err(Error::UnknownClass(_))
        ));
        let none: Vec<Chunk> = Vec::new();
        assert!(matches!(
            build_index(&encoder, &vocab, &none),
            Err(Error::EmptyChunks)
        ));
    }

    #[test]
    fn k_saturation_returns_everything_ranked() {
        let (vocab, encoder, chunks) = setup();
        let index = build_index(&encoder, &vocab, &chunks).unwrap();
        let q = vec![0.1; 8];
        let hits = search(&index, &q, 100).unwrap();
        assert_eq!(hits.len(), 3);
        for w in hits.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn self_match_ranks_first() {
        let index = DenseIndex {
            vectors: Matrix::from_rows(vec![
                vec![1.0, 0.0],
                vec![0.0, 0.5],
                vec![0.0, -0.5],
            ]),
            chunk_ids: vec!["a".into(), "b".into(), "c".into()],
            metadata: vec![
                ChunkMeta { doc_id: "d".into(), category: "x".into() };
                3
            ],
            encoder_hash: String::new(),
        };
        let hits = search(&index, &[1.0, 0.0], 2).unwrap();
        assert_eq!(hits[0].chunk_id, "a");
        assert_eq!(hits[0].score, 1.0);
    }

    #[test]
    fn duplicate_vectors_order_by_chunk_id() {
        let index = DenseIndex {
            vectors: Matrix::from_rows(vec![vec![1.0], vec![1.0], vec![1.0]]),
            chunk_ids: vec!["zz".into(), "aa".into(), "mm".into()],
            metadata: vec![
                ChunkMeta { doc_id: "d".into(), category: "x".into() };
                3
            ],
            encoder_hash: String::new(),
        };
        let hits = search(&index, &[1.0], 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.chunk_id.as_str()).collect();
        assert_eq!(ids, vec!["aa", "mm", "zz"]);
    }

    #[test]
    fn search_matches_independent_oracle_on_random_indexes() {
        let mut rng = Rng::new(7);
        for trial in 0..10 {
            let n = 20 + rng.below(80);
            let d = 2 + rng.below(8);
            let mut vectors = Matrix::zeros(n, d);
            for v in &mut vectors.data {
                // Coarse grid so score ties actually occur.
                *v = (rng.below(5) as f64) - 2.0;
            }
            let chunk_ids: Vec<String> = (0..n).map(|i| format!("ch{i:03}")).collect();
            let index = DenseIndex {
                vectors,
                chunk_ids,
                metadata: vec![
                    ChunkMeta { doc_id: "d".into(), category: "c".into() };
                    n
                ],
                encoder_hash: String::new(),
            };
            let q: Vec<f64> = (0..d).map(|_| (rng.below(5) as f64) - 2.0).collect();
            let k = 1 + rng.below(n + 5);
            let got = search(&index, &q, k).unwrap();
            let expected = oracle_scan(&index, &q, k);
            assert_eq!(got.len(), expected.len(), "trial {trial}");
            for (g, (id, s)) in got.iter().zip(&expected) {
                assert_eq!(&g.chunk_id, id, "trial {trial}");
                assert_eq!(g.score, *s, "trial {trial}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (vocab, encoder, chunks) = setup();
        let index = build_index(&encoder, &vocab, &chunks).unwrap();
        assert!(matches!(
            search(&index, &[1.0, 2.0], 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(search(&index, &vec![0.0; 8], 0).is_err());
    }

    #[test]
    fn retrieve_is_pure() {
        let (vocab, encoder, chunks) = setup();
        let index = build_index(&encoder, &vocab, &chunks).unwrap();
        let run = || {
            retrieve(
                &encoder, None, &index, &vocab, "q1", "alpha beta", &QueryCt::None, 3, 64,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fixed_ct_mode_composes_that_token() {
        let (vocab, encoder, chunks) = setup();
        let index = build_index(&encoder, &vocab, &chunks).unwrap();
        let fixed = retrieve(
            &encoder,
            None,
            &index,
            &vocab,
            "q1",
            "alpha beta",
            &QueryCt::Fixed(ControlToken::Class("science".into())),
            3,
            64,
        )
        .unwrap();
        assert_eq!(fixed.assigned_ct, Some(ControlToken::Class("science".into())));
        let plain = retrieve(
            &encoder, None, &index, &vocab, "q1", "alpha beta", &QueryCt::None, 3, 64,
        )
        .unwrap();
        assert_eq!(plain.assigned_ct, None);
        // Composing a CT changes the query vector, so scores differ.
        assert_ne!(fixed.ranked[0].score, plain.ranked[0].score);
    }

    #[test]
    fn classified_mode_requires_classifier() {
        let (vocab, encoder, chunks) = setup();
        let index = build_index(&encoder, &vocab, &chunks).unwrap();
        let err = retrieve(
            &encoder,
            None,
            &index,
            &vocab,
            "q1",
            "alpha",
            &QueryCt::Classified { threshold: 0.5 },
            3,
            64,
        )
        .unwrap_err();
        assert!(matches!(err, Error::CheckpointMissing(_)));
    }

    #[test]
    fn stale_index_hash_is_rejected() {
        let (vocab, encoder, chunks) = setup();
        let mut index = build_index(&encoder, &vocab, &chunks).unwrap();
        index.encoder_hash = "deadbeef".into();
        assert!(matches!(
            retrieve(
                &encoder, None, &index, &vocab, "q", "alpha", &QueryCt::None, 1, 64
            ),
            Err(Error::VocabMismatch { .. })
        ));
    }

    #[test]
    fn index_round_trip_and_jsonl_output() {
        let (vocab, encoder, chunks) = setup();
        let index = build_index(&encoder, &vocab, &chunks).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        index.save(&path).unwrap();
        let loaded = DenseIndex::load(&path).unwrap();
        assert_eq!(index, loaded);

        let result = retrieve(
            &encoder, None, &index, &vocab, "q9", "alpha", &QueryCt::None, 2, 64,
        )
        .unwrap();
        let jsonl = results_to_jsonl(&[result]);
        assert!(jsonl.starts_with("{\"query_id\":\"q9\""));
        assert!(jsonl.contains("\"assigned_ct\":null"));
        assert!(jsonl.ends_with('\n'));
    }
}
