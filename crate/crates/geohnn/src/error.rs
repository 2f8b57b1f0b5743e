use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: checkpoint schema version {found} is not supported (expected {expected})")]
    Schema { path: PathBuf, found: u64, expected: u64 },
    #[error(transparent)]
    Core(#[from] geohnn_core::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 0 success, 1 property or numerical failure, 2 usage, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } | CliError::Schema { .. } => 3,
            CliError::Core(_) | CliError::Failed(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        CliError::Format { path: path.to_path_buf(), message: message.to_string() }
    }
}

pub(crate) trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|source| CliError::Io { path: path.to_path_buf(), source })
    }
}
