use std::io;

use thiserror::Error;

use crate::taxonomy::TaxonomyError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("every record was rejected ({rejected} rejected, {dropped} dropped)")]
    NothingImported { rejected: usize, dropped: usize },

    #[error("annotations reference unknown sentences: {}", .0.join(", "))]
    DanglingAnnotations(Vec<String>),

    #[error("span {start}..{end} is out of range for `{sentence_id}` (length {len})")]
    InvalidSpan {
        sentence_id: String,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("expected {expected} items, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no labeled training data")]
    EmptyTrainingSet,

    #[error("gold label `{0}` is not in the model label set")]
    LabelOutsideModel(String),

    #[error("unknown sentence `{0}`")]
    UnknownSentence(String),

    #[error("taxonomy hash mismatch: expected {expected}, found {found}")]
    TaxonomyMismatch { expected: String, found: String },

    #[error("label order does not match the model: {0}")]
    LabelOrder(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("no labeled sentences to evaluate")]
    NoLabeledSentences,

    #[error("model has not been trained")]
    UntrainedModel,

    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,

    #[error("need at least two centroids, got {0}")]
    TooFewCentroids(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
