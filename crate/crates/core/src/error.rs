use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TmmsbError {
    #[error("transaction {index}: {reason}")]
    InvalidTransaction { index: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "transaction {transaction}: no recipients after {attempts} draws (sender {sender}); {detail}"
    )]
    RejectionCapExceeded {
        transaction: usize,
        sender: usize,
        attempts: usize,
        detail: String,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown format `{0}` (expected jsonl or csv)")]
    UnknownFormat(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TmmsbError> = std::result::Result<T, E>;
