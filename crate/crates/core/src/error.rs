use std::fmt;

use thiserror::Error;

use crate::roadnet::LinkId;

/// Broad failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Runtime,
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorCategory::Validation => f.write_str("validation"),
            ErrorCategory::Runtime => f.write_str("runtime"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index {index} out of range for an axis of {count} steps")]
    OutOfRange { index: usize, count: usize },
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown link ids: {0:?}")]
    UnknownLinks(Vec<LinkId>),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("read of step {requested} is past the prediction origin {origin}")]
    Leakage { requested: usize, origin: usize },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io(_) | Error::Diverged(_) => ErrorCategory::Runtime,
            Error::Leakage { .. } => ErrorCategory::Runtime,
            _ => ErrorCategory::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
