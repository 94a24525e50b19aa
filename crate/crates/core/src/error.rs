use thiserror::Error;

use crate::solver::TraceRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("rank-deficient matrix: smallest singular value {smallest:e} is below {threshold:e}")]
    RankDeficiency { smallest: f64, threshold: f64 },

    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    Dimension {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("tangent vector is not based at the given representative")]
    BaseMismatch,

    /// A non-finite value appeared while iterating. `trace` holds every
    /// record collected before the failure.
    #[error("non-finite gradient at iteration {iter}")]
    Divergence { iter: usize, trace: Vec<TraceRecord> },

    #[error("feasible arc of the constraint ball is empty")]
    Infeasible,

    #[error("unsupported instance: {0}")]
    UnsupportedInstance(String),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    ) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }
}
