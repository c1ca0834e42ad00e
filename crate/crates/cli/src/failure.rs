//! Error classification and the one-line JSON error report on stderr.

use std::fmt;

use latlink::Error;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, or input that fails validation.
    Usage(String),
    Lib(Error),
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Lib(e) => match e {
                Error::Io { .. } => "io",
                Error::MalformedHeader(_) => "malformed_header",
                Error::MalformedPayload(_) => "malformed_payload",
                Error::DimensionMismatch(_) => "dimension_mismatch",
                Error::DuplicateStateId(_) => "duplicate_state_id",
                Error::UnknownStateId(_) => "unknown_state_id",
                Error::NonFinite { .. } => "non_finite",
                Error::InsufficientSharedStates => "insufficient_shared_states",
                Error::EmptySplit(_) => "empty_split",
                Error::EmptyTrain => "empty_train",
                Error::SingularNormalMatrix => "singular_normal_matrix",
                Error::InverseNotChosen => "inverse_not_chosen",
                Error::SplitOverlap(_) => "split_overlap",
                Error::ZeroVariance(_) => "zero_variance",
                Error::UndefinedCorrelation(_) => "undefined_correlation",
                Error::InvalidArgument(_) => "invalid_argument",
                Error::NearSingular(_) => "near_singular",
                Error::Diverged { .. } => "diverged",
                Error::Json(_) => "json",
                Error::Csv(_) => "csv",
            },
        }
    }

    /// 2 when the caller can fix the invocation or its inputs, 1 when the
    /// run itself failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
            CliError::Lib(e) => match e {
                Error::Io { .. }
                | Error::Diverged { .. }
                | Error::ZeroVariance(_)
                | Error::UndefinedCorrelation(_)
                | Error::InverseNotChosen
                | Error::EmptyTrain => 1,
                _ => 2,
            },
        }
    }

    pub fn report(&self) {
        let line = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        eprintln!("{line}");
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
