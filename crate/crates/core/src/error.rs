use std::path::PathBuf;
use thiserror::Error;

/// Workspace-wide error type. Variants map onto the CLI exit codes
/// (validation vs runtime) and the C ABI status codes.
#[derive(Debug, Error)]
pub enum SalvetError {
    /// Caller handed in something structurally wrong: bad shape, empty
    /// input, out-of-domain value.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model spec, config file, or CLI invocation failed validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// Arithmetic produced or would produce a meaningless result:
    /// non-finite values, zero vectors where a direction is needed,
    /// degenerate variance.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Filesystem-level failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file existed but its contents did not parse or did not match
    /// the declared format.
    #[error("parse error: {0}")]
    Parse(String),
}

impl SalvetError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SalvetError::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code for the CLI: 1 for validation problems the caller can
    /// fix by changing inputs, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            SalvetError::InvalidArgument(_) | SalvetError::Config(_) | SalvetError::Parse(_) => 1,
            SalvetError::Numeric(_) | SalvetError::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, SalvetError>;
