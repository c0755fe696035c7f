use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {context} at component {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("problem is infeasible")]
    Infeasible,

    #[error("active-set iteration exceeded {0} steps")]
    Cycling(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state {state:?} left the valid operating region")]
    InfeasibleOperatingPoint { state: Vec<f64> },

    #[error("state {0:?} is outside the law domain")]
    OutsideDomain(Vec<f64>),

    #[error("no critical region contains {0:?}")]
    LawIncomplete(Vec<f64>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
