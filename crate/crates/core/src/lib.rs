//! Control-token dense passage retrieval.
//!
//! This crate implements a desk-scale retrieval engine in which both queries
//! and passages are augmented with *control tokens* (CTs): special vocabulary
//! entries of the form `###<class>` that encode the document category a query
//! is about. A bag-of-tokens classifier predicts the category of an incoming
//! question; when its confidence clears a threshold the matching CT is
//! prepended to the query before encoding, otherwise the dedicated `[unk]`
//! fallback token is used. Passages are always indexed with their gold
//! category CT.
//!
//! The pieces, roughly in pipeline order:
//!
//! - [`mrc`] — loading and validating MRC-style records (question, context,
//!   answer, category).
//! - [`chunk`] — sentence splitting and packing sentences into token-bounded
//!   passages, both answer-centric (for training pairs) and full-coverage
//!   (for the index).
//! - [`vocab`] — corpus vocabulary construction and control-token
//!   registration; text encoding into id sequences.
//! - [`encoder`] — the two mean-pooled embedding towers and dot-product
//!   scoring.
//! - [`train`] — in-batch-negative NLL training of the dual encoder with
//!   analytic gradients.
//! - [`classifier`] — the softmax category classifier and threshold gating.
//! - [`index`] — exact dense top-k search over CT-composed passage vectors.
//! - [`eval`] — answer-containment Top-N accuracy, base-vs-CT comparison,
//!   and the threshold sweep.
//! - [`synth`] — deterministic synthetic corpus generation with controllable
//!   cross-domain ambiguity.
//! - [`pipeline`] — glue that assembles corpora into trained artifacts.
//!
//! Everything is deterministic: a fixed seed yields byte-identical
//! vocabularies, checkpoints, indexes, and reports.

pub mod chunk;
pub mod classifier;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod matrix;
pub mod mrc;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod train;
pub mod util;
pub mod vocab;

pub use chunk::{chunk_around_answer, chunk_for_index, split_sentences, Chunk, SentenceSpan};
pub use classifier::{
    assign_ct, predict_proba, train_classifier, ClassifierConfig, ClassifierParams, CtDecision,
};
pub use encoder::{init_encoder, DualEncoder, EncoderParams, Tower};
pub use error::{Error, Result};
pub use eval::{
    contains_answer, run_comparison, threshold_sweep, ComparisonOutcome, EvalMode, EvalQuery,
    EvalReport,
};
pub use index::{build_index, search, DenseIndex, QueryCt, RetrievalResult, ScoredChunk};
pub use matrix::Matrix;
pub use mrc::{load_mrc_jsonl, MrcRecord};
pub use pipeline::ExperimentConfig;
pub use synth::{generate, SynthConfig};
pub use train::{grad_batch, in_batch_nll, train_retriever, Optimizer, TrainConfig};
pub use vocab::{ControlToken, TokenSeq, Vocab};
