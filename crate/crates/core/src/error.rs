use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum CerfError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: {diagnostics}")]
    Diverged { step: usize, diagnostics: String },
}

impl CerfError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CerfError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CerfError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by invalid user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CerfError::Config { .. }
                | CerfError::Validation(_)
                | CerfError::Shape(_)
                | CerfError::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CerfError>;
