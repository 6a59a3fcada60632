use std::path::Path;

use thiserror::Error;

/// Failures of a CLI run, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: ndtomo::Error,
    },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches context to a library error. I/O failures keep their exit code.
pub trait Context<T> {
    fn context(self, what: &str) -> CliResult<T>;
}

impl<T> Context<T> for ndtomo::Result<T> {
    fn context(self, what: &str) -> CliResult<T> {
        self.map_err(|e| match e {
            ndtomo::Error::Io(io) => CliError::Io {
                path: what.to_string(),
                message: io.to_string(),
            },
            other => CliError::Numerical {
                context: what.to_string(),
                source: other,
            },
        })
    }
}
