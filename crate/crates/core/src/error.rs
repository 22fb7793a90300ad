//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while ingesting, training, indexing, or
/// evaluating. Variants carry the identifiers needed to locate the offending
/// input (line numbers, record ids, labels) so callers can report actionable
/// messages.
#[derive(Debug, Error)]
pub enum Error {
    // --- corpus ingestion ---
    #[error("line {line}: not valid JSON: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("record `{id}`: answer_text not found in context")]
    AnswerNotInContext { id: String },
    #[error("record `{id}`: empty {field} after trimming")]
    EmptyText { id: String, field: String },

    // --- chunking ---
    #[error("record `{id}`: answer sentence alone exceeds the token budget ({tokens} > {max})")]
    AnswerSentenceTooLong { id: String, tokens: usize, max: usize },
    #[error("doc `{doc_id}`: sentence {sentence} exceeds the token budget ({tokens} > {max})")]
    SentenceTooLong {
        doc_id: String,
        sentence: usize,
        tokens: usize,
        max: usize,
    },

    // --- vocabulary ---
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("duplicate class label `{0}`")]
    DuplicateClass(String),
    #[error("invalid class label `{0}`")]
    InvalidClass(String),
    #[error("class `{0}` is not registered as a control token")]
    UnknownClass(String),

    // --- encoding / numerics ---
    #[error("cannot embed an empty token sequence{}", .index.map(|i| format!(" (batch row {i})")).unwrap_or_default())]
    EmptySequence { index: Option<usize> },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    // --- training ---
    #[error("need at least {needed} pairs to form one batch, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("invalid training configuration: {0}")]
    ConfigInvalid(String),

    // --- classifier ---
    #[error("classifier corpus contains a single class (`{0}`)")]
    SingleClassCorpus(String),
    #[error("label `{0}` is not among the registered classes")]
    UnregisteredLabel(String),
    #[error("cannot classify an empty question")]
    EmptyQuestion,

    // --- index & retrieval ---
    #[error("cannot build an index from zero chunks")]
    EmptyChunks,
    #[error("vocabulary mismatch: {context} (expected hash {expected}, got {got})")]
    VocabMismatch {
        context: String,
        expected: String,
        got: String,
    },

    // --- evaluation ---
    #[error("no retrieval result for query `{0}`")]
    MissingQuery(String),
    #[error("missing chunk text for chunk `{0}`")]
    MissingChunk(String),
    #[error("required artifact missing: {0}")]
    CheckpointMissing(String),

    // --- persistence ---
    #[error("unsupported {kind} format version {found} (expected {expected})")]
    UnsupportedVersion {
        kind: String,
        found: u32,
        expected: u32,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {detail}")]
    Parse { path: String, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
