use thiserror::Error;

/// Crate-wide error type. Contract violations (shape mismatches inside
/// the math) panic instead; these variants cover everything a caller can
/// actually recover from or report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {path}:{row}:{col}: {message}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
