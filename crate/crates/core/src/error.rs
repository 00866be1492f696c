use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    CorpusLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { path: PathBuf, offset: u64 },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("vocab_size {requested} is too small (minimum {minimum})")]
    VocabSizeTooSmall { requested: usize, minimum: usize },

    #[error("unknown token id {id} at position {position} (vocab size {vocab_size})")]
    UnknownTokenId {
        id: u32,
        position: usize,
        vocab_size: usize,
    },

    #[error("unsupported tokenizer format version {0}")]
    UnsupportedVersion(String),

    #[error("malformed tokenizer file: {0}")]
    MalformedTokenizer(String),

    #[error("invalid argument {name}: {message}")]
    InvalidArgument { name: &'static str, message: String },

    #[error("only {available} non-overlapping candidates, {requested} requested")]
    NotEnoughCandidates { requested: usize, available: usize },

    #[error("no words in corpus; fertility is undefined")]
    NoWords,

    #[error("embedding dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite embedding value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("added token {token:?} has no subword ids")]
    EmptySubwords { token: String },

    #[error("malformed embedding file: {0}")]
    MalformedEmbedding(String),

    #[error("embedding file truncated: expected {expected} bytes, found {actual}")]
    TruncatedEmbedding { expected: u64, actual: u64 },

    #[error("pool {pool:?} would need {required:.3} epochs, cap is {cap}")]
    EpochCapExceeded {
        pool: String,
        required: f64,
        cap: f64,
    },

    #[error("pool {pool:?} has {available} items, {required} required")]
    InsufficientPool {
        pool: String,
        required: usize,
        available: usize,
    },

    #[error("document {0:?} not found in corpus")]
    MissingDocument(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("malformed packed dataset: {0}")]
    MalformedPacked(String),

    #[error("invalid preference pair {id:?}: {message}")]
    InvalidPair { id: String, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            message: message.into(),
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::CorpusLine { .. } => "corpus_line",
            Error::InvalidUtf8 { .. } => "invalid_utf8",
            Error::DuplicateId(_) => "duplicate_id",
            Error::EmptyCorpus(_) => "empty_corpus",
            Error::VocabSizeTooSmall { .. } => "vocab_size_too_small",
            Error::UnknownTokenId { .. } => "unknown_token_id",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::MalformedTokenizer(_) => "malformed_tokenizer",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::NotEnoughCandidates { .. } => "not_enough_candidates",
            Error::NoWords => "no_words",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::EmptySubwords { .. } => "empty_subwords",
            Error::MalformedEmbedding(_) => "malformed_embedding",
            Error::TruncatedEmbedding { .. } => "truncated_embedding",
            Error::EpochCapExceeded { .. } => "epoch_cap_exceeded",
            Error::InsufficientPool { .. } => "insufficient_pool",
            Error::MissingDocument(_) => "missing_document",
            Error::InvalidManifest(_) => "invalid_manifest",
            Error::MalformedPacked(_) => "malformed_packed",
            Error::InvalidPair { .. } => "invalid_pair",
            Error::Json(_) => "json",
        }
    }

    /// Structured fields worth surfacing to machine consumers.
    pub fn details(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Error::CorpusLine { path, line, .. } => json!({"path": path, "line": line}),
            Error::InvalidUtf8 { path, offset } => json!({"path": path, "offset": offset}),
            Error::Io { path, .. } => json!({"path": path}),
            Error::UnknownTokenId { id, position, .. } => json!({"id": id, "position": position}),
            Error::NotEnoughCandidates {
                requested,
                available,
            } => json!({"requested": requested, "available": available}),
            Error::EpochCapExceeded {
                pool,
                required,
                cap,
            } => json!({"pool": pool, "required": required, "cap": cap}),
            Error::InsufficientPool {
                pool,
                required,
                available,
            } => json!({"pool": pool, "required": required, "available": available}),
            Error::TruncatedEmbedding { expected, actual } => {
                json!({"expected": expected, "actual": actual})
            }
            Error::MissingDocument(id) => json!({"id": id}),
            Error::InvalidArgument { name, .. } => json!({"name": name}),
            _ => json!({}),
        }
    }
}
