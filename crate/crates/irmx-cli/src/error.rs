//! CLI error type and the exit-code contract.

use irmx_core::CoreError;
use std::path::PathBuf;

/// Everything that can abort a command.
///
/// Exit codes: 0 success, 1 property failure, 2 configuration or I/O
/// error, 3 every (method, seed) run diverged.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{failed} of {total} properties failed")]
    PropertiesFailed { failed: usize, total: usize },
    #[error("every (method, seed) run diverged")]
    AllRunsDiverged,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Core(_) => 2,
            CliError::PropertiesFailed { .. } => 1,
            CliError::AllRunsDiverged => 3,
        }
    }
}
