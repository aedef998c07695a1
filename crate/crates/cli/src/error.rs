use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Family(#[from] sfp_core::FamilyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl CliError {
    /// Process exit code: everything raised before analyses run is an input
    /// error.
    pub fn exit_code(&self) -> i32 {
        1
    }
}
