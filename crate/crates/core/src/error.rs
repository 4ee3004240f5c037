use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconsistent tendon pair in section {section}: l_plus + l_minus = {sum}, expected {expected}")]
    Consistency {
        section: usize,
        sum: f64,
        expected: f64,
    },

    #[error("could not place object '{0}' without overlap")]
    Placement(String),

    #[error("dataset format error: {0}")]
    Format(String),

    #[error("integrity error at {frame}: {reason}")]
    Integrity { frame: String, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error("invalid spec file {path}: {reason}")]
    SpecFile { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
