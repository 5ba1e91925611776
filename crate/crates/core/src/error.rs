use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("decode failure: {0}")]
    DecodeFailure(String),

    #[error("shape mismatch in {stage}: {detail}")]
    Shape { stage: &'static str, detail: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("bad header in {path}: {reason} (expected header `{expected}`)")]
    Header {
        path: String,
        reason: String,
        expected: String,
    },

    #[error("missing {what}: {name}")]
    Missing { what: &'static str, name: String },

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn shape(stage: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            stage,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line front end: 2 for data and
    /// configuration problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericDomain(_) | Error::DecodeFailure(_) | Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}
