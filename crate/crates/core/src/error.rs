use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or unsupported configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate arc at atom {atom}: anchors are collinear (theta = {theta:e})")]
    DegenerateArc { atom: usize, theta: f64 },

    #[error("unstable polar fit: |x2| = {0:e}")]
    UnstableFit(f64),

    #[error("pulse spectrum vanishes at bin {bin} (|G| = {magnitude:e})")]
    SpectrumNull { bin: usize, magnitude: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("malformed cache file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
