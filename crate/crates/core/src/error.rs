use thiserror::Error;

use crate::sim::SimLog;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("model invariant violated: {0}")]
    ModelInvariant(String),

    #[error("singular Jacobian: {0}; use a damping factor lambda > 0")]
    SingularJacobian(String),

    #[error("target {target:?} is unreachable: {reason}")]
    Unreachable { target: Vec<f64>, reason: String },

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("log schema: {0}")]
    LogSchema(String),

    #[error("simulation diverged at t = {t}: {reason}")]
    Divergence {
        t: f64,
        reason: String,
        state: Vec<f64>,
        /// Everything logged before the failing step.
        partial_log: Option<Box<SimLog>>,
    },
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
