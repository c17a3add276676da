use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ega_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("gradient check failed for: {0}")]
    GradcheckFailed(String),
}

impl CliError {
    /// 0 ok, 1 config, 2 numerical abort, 3 gradient check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Core(ega_core::Error::NumericalAbort { .. })
            | CliError::Core(ega_core::Error::NonFinite { .. }) => 2,
            CliError::Core(_) => 1,
            CliError::GradcheckFailed(_) => 3,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}
