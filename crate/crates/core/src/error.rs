use std::path::PathBuf;

use crate::geodesic::OptimizationTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix of component {component} is not symmetric positive definite")]
    NotPositiveDefinite { component: usize },

    #[error("degenerate log-density sample: all log-likelihoods are identical")]
    DegenerateLogDensity,

    #[error("non-finite log-likelihood in fitted sample at index {index}")]
    NonFiniteLogLikelihood { index: usize },

    #[error("malformed generator: {0}")]
    MalformedGenerator(String),

    #[error("layer {layer} expects input dimension {expected} but receives {got}")]
    ChainMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("linear generator is not injective (smallest singular value {sigma_min:e})")]
    NotInjective { sigma_min: f64 },

    #[error("unknown analytic warp '{0}'")]
    UnknownWarp(String),

    #[error("degenerate projection basis: endpoints are zero or collinear")]
    DegenerateProjection,

    #[error("non-finite energy at iteration {}", .trace.iterations_run)]
    NonFiniteEnergy { trace: OptimizationTrace },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
