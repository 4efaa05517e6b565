use thiserror::Error;

use crate::dynamics::TrainingTrace;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported size: {what} = {got} exceeds limit {limit}")]
    UnsupportedSize { what: &'static str, got: usize, limit: usize },

    /// Weights became non-finite. The trace recorded so far is attached.
    #[error("divergence at step {step}: non-finite weights")]
    Divergence { step: usize, trace: Box<TrainingTrace> },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn check_size(what: &'static str, got: usize, limit: usize) -> Result<()> {
    if got > limit {
        Err(Error::UnsupportedSize { what, got, limit })
    } else {
        Ok(())
    }
}
