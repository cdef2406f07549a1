use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding is empty")]
    EmptyEmbedding,

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("observation count {count} does not match dimension {dim}")]
    CountMismatch { count: usize, dim: usize },

    #[error("probe matrix is rank deficient (effective rank {rank} of {required}, condition {condition:e})")]
    RankDeficient {
        rank: usize,
        required: usize,
        condition: f64,
    },

    #[error("negative discriminant {discriminant:e}: distances are inconsistent with any real point")]
    NegativeDiscriminant { discriminant: f64 },

    #[error("degenerate norm quadratic (a = {a:e}, b = {b:e})")]
    DegenerateQuadratic { a: f64, b: f64 },

    #[error("extra observation does not discriminate between candidates (margin {margin:e})")]
    NonDiscriminating { margin: f64 },

    #[error("underdetermined: {observations} observations for rank {rank}")]
    Underdetermined { observations: usize, rank: usize },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
