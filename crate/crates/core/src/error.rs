use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the alignment toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("duplicate state_id {0:?}")]
    DuplicateStateId(String),

    #[error("unknown state_id {0:?}")]
    UnknownStateId(String),

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("fewer than 2 shared states")]
    InsufficientSharedStates,

    #[error("split fraction {0} leaves the train or test split empty")]
    EmptySplit(f64),

    #[error("empty train set")]
    EmptyTrain,

    #[error("singular normal matrix at lambda = 0; use lambda > 0 or a pseudo-solve")]
    SingularNormalMatrix,

    #[error("alignment map has no chosen inverse")]
    InverseNotChosen,

    #[error("fit/eval split overlap: {0} state(s) used for fitting appear in the evaluation set")]
    SplitOverlap(usize),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("undefined rank correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("near-singular matrix: smallest singular value {0:e}")]
    NearSingular(f64),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
