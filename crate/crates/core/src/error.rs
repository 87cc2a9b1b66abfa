use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a type invariant. `field` names the offending field.
    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("render error: {0}")]
    Render(String),

    #[error("backend does not support {0}")]
    Capability(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for failures caused by bad input or configuration, as opposed to
    /// backend or filesystem trouble.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Backend(_) | Error::Io { .. })
    }
}

/// Failures raised by scoring backends.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no table entry for {mode} input {text:?}")]
    MissingEntry { mode: &'static str, text: String },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("server returned {status}: {message}")]
    Server { status: u16, message: String },

    #[error("{0}")]
    Model(String),
}
