//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by decoding, signal, and model operations.
#[derive(Debug, Error)]
pub enum TcdError {
    /// An argument violated a precondition (bad shape, range, or value).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation was called on an object in the wrong state
    /// (e.g. stepping a finished session or using a stale cache).
    #[error("state error: {0}")]
    State(String),

    /// A configuration key failed validation. The key name is preserved so
    /// callers can report exactly which setting is wrong.
    #[error("config error: {key}: {message}")]
    Config { key: String, message: String },

    /// A serialized artifact (trace, manifest, fixture, WAV) could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl TcdError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        TcdError::InvalidArgument(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        TcdError::State(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        TcdError::Config {
            key: key.into(),
            message: msg.into(),
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        TcdError::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, TcdError>;
