use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CertError> = std::result::Result<T, E>;

/// Errors raised anywhere in the pretraining / finetuning stack.
///
/// Variants are grouped so a front end can map them onto a small set of
/// failure categories (see [`CertError::category`]).
#[derive(Debug, Error)]
pub enum CertError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Data { path: PathBuf, line: u64, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("translation via pivot `{pivot}` failed: {msg}")]
    Translator { pivot: String, msg: String },

    #[error("label leakage: {0}")]
    LabelLeakage(String),

    #[error("workflow order: {0}")]
    WorkflowOrder(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

impl ErrorCategory {
    /// Process exit status for this class of failure.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
        }
    }
}

impl CertError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CertError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        CertError::Data {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            CertError::Shape(_) | CertError::NonFinite(_) | CertError::Numeric(_) => ErrorCategory::Numeric,
            CertError::Config(_)
            | CertError::WorkflowOrder(_)
            | CertError::LabelLeakage(_)
            | CertError::InvalidInput(_) => ErrorCategory::Config,
            CertError::Data { .. } | CertError::Translator { .. } | CertError::Checkpoint(_) | CertError::Io { .. } => {
                ErrorCategory::Data
            }
        }
    }
}
