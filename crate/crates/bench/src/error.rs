use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed trace: {msg}")]
    Trace { path: PathBuf, msg: String },

    #[error(transparent)]
    Core(#[from] vcsg_core::Error),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for a diverged run, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Core(vcsg_core::Error::Diverged { .. }) => 2,
            _ => 1,
        }
    }
}
