use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dangling parent: entity `{id}` references missing parent `{parent}`")]
    DanglingParent { id: String, parent: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("dim mismatch: {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in descriptor of `{0}`")]
    NonFinite(String),

    #[error("invalid entity `{id}`: {reason}")]
    InvalidEntity { id: String, reason: String },

    #[error("sidecar: {0}")]
    Sidecar(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined cosine: zero-length embedding")]
    UndefinedCosine,

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("channel weights must be nonnegative and sum to 1 (got sum {0})")]
    Weights(f64),

    #[error("{0}")]
    Query(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("schema mismatch in {path}: expected `{expected}`, found `{found}`")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
