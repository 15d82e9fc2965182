//! Crate-wide error type.

use std::fmt;

/// Errors produced by the engine, the data loaders, and the harness.
#[derive(Debug)]
pub enum PecError {
    /// A layer stack whose consecutive shapes do not line up, or an input
    /// whose shape does not match the network.
    ShapeMismatch(String),
    /// A structurally invalid configuration (bad split, empty stream, ...).
    InvalidConfig(String),
    /// A malformed or truncated data file.
    Data(String),
    /// Linear algebra that failed beyond the stabilization we apply
    /// (non-PSD Gram matrices, diverging imitator training, ...).
    Numerical(String),
    Io(std::io::Error),
}

impl fmt::Display for PecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PecError::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            PecError::InvalidConfig(m) => write!(f, "invalid config: {m}"),
            PecError::Data(m) => write!(f, "data error: {m}"),
            PecError::Numerical(m) => write!(f, "numerical failure: {m}"),
            PecError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for PecError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            PecError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for PecError {
    fn from(e: std::io::Error) -> Self {
        PecError::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, PecError>;
