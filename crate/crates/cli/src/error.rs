use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: fmm_lab::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not encode {what}: {message}")]
    Encode { what: String, message: String },
    #[error("could not start worker pool: {0}")]
    Threads(String),
}

impl CliError {
    pub fn invalid(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::ConfigInvalid { path: path.into(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn encode(what: impl Into<String>, err: impl ToString) -> Self {
        CliError::Encode { what: what.into(), message: err.to_string() }
    }
}

/// Attach a command-level context to core errors.
pub trait Context<T> {
    fn context(self, context: &str) -> std::result::Result<T, CliError>;
}

impl<T> Context<T> for fmm_lab::Result<T> {
    fn context(self, context: &str) -> std::result::Result<T, CliError> {
        self.map_err(|source| CliError::Model { context: context.to_string(), source })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
