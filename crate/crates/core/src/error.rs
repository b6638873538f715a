use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("covariance matrix {name} is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { name: &'static str, min_eigenvalue: f64 },

    #[error("covariance matrix {name} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { name: &'static str, asymmetry: f64 },

    #[error("cannot flip without ground truth")]
    MissingGroundTruth,

    #[error("linear system is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("theory outside validity range: h = {h:e} at eta = {eta}, gamma = {gamma}")]
    OutsideValidity { h: f64, eta: f64, gamma: f64 },

    #[error("fixed point did not converge after {iterations} iterations (last change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("gradient descent diverged at step {step}")]
    Diverged {
        step: usize,
        last_finite: nalgebra::DVector<f64>,
    },

    #[error("{path}: row {row}: {message}")]
    Parse { path: PathBuf, row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
