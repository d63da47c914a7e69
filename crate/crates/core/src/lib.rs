//! Numerical side of the laboratory: stationary Dyson Brownian motion
//! sampling, deterministic chain quadrature for its multi-time
//! probabilities, Airy-kernel Fredholm determinants, a Painlevé II
//! Tracy-Widom solver and finite-difference PDE residuals.

pub mod airy;
pub mod fredholm;
pub mod gauss;
pub mod model;
pub mod ou;
pub mod painleve;
pub mod quadrature;
pub mod registry;
pub mod residual;
pub mod tau;

mod dd;

pub use model::{
    build_locus, Endpoint, ExperimentConfig, IntervalUnion, LocusConstants, Mode, Options,
    TimeGrid, WindowFamily,
};

use serde::Serialize;

/// Error type shared by every numerical module.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// Bad input, with a path to the offending field.
    #[error("invalid {path}: {msg}")]
    Invalid { path: String, msg: String },
    /// A computation failed to converge or hit a singularity.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl CoreError {
    pub fn invalid(path: impl Into<String>, msg: impl Into<String>) -> Self {
        CoreError::Invalid {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CoreError::Numerical(msg.into())
    }

    /// Prefix the field path of a validation error.
    pub fn at(self, prefix: impl Into<String>) -> Self {
        match self {
            CoreError::Invalid { path, msg } => {
                let prefix = prefix.into();
                let path = if path == "endpoints" {
                    prefix
                } else {
                    format!("{prefix}.{path}")
                };
                CoreError::Invalid { path, msg }
            }
            other => other,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, CoreError::Invalid { .. } | CoreError::Unsupported(_))
    }
}

impl From<rmtlab_symbolic::SymbolicError> for CoreError {
    fn from(e: rmtlab_symbolic::SymbolicError) -> Self {
        CoreError::Numerical(e.to_string())
    }
}

/// A probability with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbEstimate {
    pub value: f64,
    /// Binomial standard error for Monte Carlo, absolute error estimate for
    /// deterministic methods.
    pub stderr: f64,
    pub method: String,
    pub samples: u64,
}
