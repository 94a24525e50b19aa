//! Geometrically robust least squares on ℝⁿ × Gr(k, n).
//!
//! Solves `min_x max_{d(y, ŷ) ≤ ρ} ‖P_y x − b‖²` by relaxing the ball with a
//! softplus-smoothed exact penalty and running simultaneous Riemannian
//! gradient descent ascent. See [`solver::solve`].

// `!(a >= b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod geometry;
pub mod objective;
pub mod oracles;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{GrassmannPoint, HorizontalTangent, PrincipalAngles, StiefelRep};
pub use objective::{ObjectivePoint, PenaltyParams, ProblemInstance};
pub use solver::{solve, SolveResult, SolverConfig, TraceRecord};
