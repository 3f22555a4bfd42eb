use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver, oracles and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {what} at t={t}, x={x:?}")]
    NonFinite {
        what: &'static str,
        t: f64,
        x: Vec<f64>,
    },

    #[error("non-finite value in backward layer {layer} at node {node} (x={x:?}): {what}")]
    NonFiniteLayer {
        layer: usize,
        node: usize,
        x: Vec<f64>,
        what: &'static str,
    },

    #[error("quadrature integrand returned a non-finite value at {0:?}")]
    NonFiniteIntegrand(Vec<f64>),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unknown coefficient family `{0}`")]
    UnknownFamily(String),

    #[error("closed-form evaluators for `{0}` require sign calibration first")]
    Uncalibrated(&'static str),

    #[error("rate fit needs at least {needed} usable points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
