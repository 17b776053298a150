use std::path::PathBuf;

use mgp_core::MgpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("length mismatch: {left} predictions vs {right} targets")]
    LengthMismatch { left: usize, right: usize },

    #[error("nothing to score")]
    Empty,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0} contains no data rows")]
    EmptyFile(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Model(#[from] MgpError),
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Io { path, source }
}
