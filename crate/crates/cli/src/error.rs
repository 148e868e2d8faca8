use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: commflow::Error,
    },

    #[error(transparent)]
    Data(#[from] commflow::Error),

    #[error("clustering failed for seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: commflow::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    /// Process exit code: 1 usage, 2 bad input data, 3 internal failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::File { .. } | HarnessError::Data(_) | HarnessError::Run { .. } => 2,
            HarnessError::Internal(_) => 3,
        }
    }

    pub fn in_file(path: &Path, source: impl Into<commflow::Error>) -> Self {
        HarnessError::File {
            path: path.to_path_buf(),
            source: source.into(),
        }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Internal(format!("csv: {e}"))
    }
}
