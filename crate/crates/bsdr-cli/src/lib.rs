//! Command-line companion to `bsdr-core`: configuration files, dataset
//! serialization, reports, and the experiment harnesses.

pub mod config;
pub mod dataset_io;
pub mod experiments;
pub mod oracle;
pub mod report;

/// Errors surfaced by the command-line layer, wrapping core domain
/// errors with file and line context where it exists.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] bsdr_core::Error),
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    DatasetLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: impl AsRef<str>, err: std::io::Error) -> CliError {
        CliError::Io {
            path: path.as_ref().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
