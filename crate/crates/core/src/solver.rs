//! Timescale-separated Riemannian gradient descent ascent.
//!
//! One iteration moves both players simultaneously from `(x_k, y_k)`:
//!
//! ```text
//! x_{k+1} = x_k − η_x · grad_x F(x_k, y_k)
//! y_{k+1} = Exp_{y_k}( η_y · grad_y F(x_k, y_k) )
//! ```
//!
//! which is the exponential map of ℝⁿ × Gr(k, n) applied to the stacked
//! step. Iteration stops once `√(‖grad_x‖² + ‖grad_y‖_F²) ≤ grad_tol`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{chordal_distance, exp_map, project_vector, random_point};
use crate::objective::{
    penalized_grads, ObjectivePoint, PenalizedGradients, PenaltyParams, ProblemInstance,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eta_x: f64,
    pub eta_y: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub record_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta_x: 0.01,
            eta_y: 0.1,
            max_iters: 50_000,
            grad_tol: 1e-6,
            seed: 0,
            record_every: 1,
        }
    }
}

impl SolverConfig {
    /// Every violated field, in declaration order.
    pub fn problems(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if !(self.eta_x > 0.0 && self.eta_x.is_finite()) {
            out.push(Error::invalid("eta_x", format!("need eta_x > 0, got {}", self.eta_x)));
        }
        if !(self.eta_y > 0.0 && self.eta_y.is_finite()) {
            out.push(Error::invalid("eta_y", format!("need eta_y > 0, got {}", self.eta_y)));
        }
        if self.max_iters == 0 {
            out.push(Error::invalid("max_iters", "need max_iters >= 1"));
        }
        if !(self.grad_tol > 0.0) {
            out.push(Error::invalid(
                "grad_tol",
                format!("need grad_tol > 0, got {}", self.grad_tol),
            ));
        }
        if self.record_every == 0 {
            out.push(Error::invalid("record_every", "need record_every >= 1"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    pub grad_x_norm: f64,
    pub grad_y_norm: f64,
    pub combined: f64,
}

impl Stationarity {
    fn from_grads(g: &PenalizedGradients) -> Self {
        let gx = g.x_norm();
        let gy = g.y_norm();
        Self {
            grad_x_norm: gx,
            grad_y_norm: gy,
            combined: gx.hypot(gy),
        }
    }
}

/// Gradient norms of the penalized objective at `p`.
pub fn stationarity(
    p: &ObjectivePoint,
    inst: &ProblemInstance,
    params: &PenaltyParams,
) -> Result<Stationarity> {
    penalized_grads(p, inst, params).map(|g| Stationarity::from_grads(&g))
}

/// Iterate `k` together with the gradients evaluated there.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub iter: usize,
    pub point: ObjectivePoint,
    pub grad_x_norm: f64,
    pub grad_y_norm: f64,
    grads: PenalizedGradients,
}

impl SolverState {
    pub fn new(
        point: ObjectivePoint,
        inst: &ProblemInstance,
        params: &PenaltyParams,
    ) -> Result<Self> {
        Self::at(0, point, inst, params)
    }

    fn at(
        iter: usize,
        point: ObjectivePoint,
        inst: &ProblemInstance,
        params: &PenaltyParams,
    ) -> Result<Self> {
        let grads = penalized_grads(&point, inst, params)?;
        if !grads.is_finite() || point.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iter,
                trace: Vec::new(),
            });
        }
        Ok(Self {
            iter,
            point,
            grad_x_norm: grads.x_norm(),
            grad_y_norm: grads.y_norm(),
            grads,
        })
    }

    pub fn gradients(&self) -> &PenalizedGradients {
        &self.grads
    }

    pub fn stationarity(&self) -> Stationarity {
        Stationarity::from_grads(&self.grads)
    }
}

/// One simultaneous descent/ascent update.
///
/// `config` is not validated here, so a zero step for one player is allowed.
pub fn step(
    state: &SolverState,
    inst: &ProblemInstance,
    params: &PenaltyParams,
    config: &SolverConfig,
) -> Result<SolverState> {
    let g = &state.grads;
    let x = &state.point.x - &g.x * config.eta_x;
    let y = exp_map(state.point.y.rep(), &g.y.scale(config.eta_y)).map_err(|e| match e {
        Error::RankDeficiency { .. } => Error::Divergence {
            iter: state.iter + 1,
            trace: Vec::new(),
        },
        other => other,
    })?;
    SolverState::at(state.iter + 1, ObjectivePoint::new(x, y), inst, params)
}

/// One row of the iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `√(‖grad_x‖² + ‖grad_y‖_F²)` of the penalized objective.
    pub grad_norm: f64,
    /// `P_{y_k} x_k`
    pub projected: DVector<f64>,
    /// Chordal `d(y_k, ŷ)`.
    pub center_distance: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub final_point: ObjectivePoint,
    pub converged: bool,
    pub iters_run: usize,
    pub final_stationarity: Stationarity,
    pub trace: Vec<TraceRecord>,
}

impl SolveResult {
    pub fn center_distance(&self, inst: &ProblemInstance) -> Result<f64> {
        chordal_distance(&self.final_point.y, inst.y_hat())
    }

    /// `max(0, d(y*, ŷ) − ρ)`
    pub fn constraint_violation(&self, inst: &ProblemInstance) -> Result<f64> {
        Ok((self.center_distance(inst)? - inst.rho()).max(0.0))
    }
}

/// Standard normal `x₀` and uniform `y₀`, both derived from `seed`.
pub fn random_init(inst: &ProblemInstance, seed: u64) -> Result<ObjectivePoint> {
    let y = random_point(inst.n(), inst.k(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Separate stream so x₀ is independent of the matrix behind y₀.
    rng.set_stream(1);
    let x = DVector::from_iterator(inst.n(), (0..inst.n()).map(|_| StandardNormal.sample(&mut rng)));
    Ok(ObjectivePoint::new(x, y))
}

fn record(state: &SolverState, inst: &ProblemInstance) -> Result<TraceRecord> {
    Ok(TraceRecord {
        iter: state.iter,
        grad_norm: state.stationarity().combined,
        projected: project_vector(&state.point.y, &state.point.x),
        center_distance: chordal_distance(&state.point.y, inst.y_hat())?,
    })
}

/// Runs the iteration from `init` (or a seeded random start) until the
/// combined gradient norm drops to `grad_tol` or `max_iters` steps are taken.
///
/// The trace holds every iterate whose index is a multiple of
/// `record_every`, starting with iterate 0. On divergence the error carries
/// the trace collected so far.
pub fn solve(
    inst: &ProblemInstance,
    params: &PenaltyParams,
    config: &SolverConfig,
    init: Option<ObjectivePoint>,
) -> Result<SolveResult> {
    config.validate()?;
    let init = match init {
        Some(p) => p,
        None => random_init(inst, config.seed)?,
    };
    let mut state = SolverState::new(init, inst, params)?;
    let mut trace = Vec::new();
    let converged = loop {
        if state.iter % config.record_every == 0 {
            trace.push(record(&state, inst)?);
        }
        if state.stationarity().combined <= config.grad_tol {
            break true;
        }
        if state.iter >= config.max_iters {
            break false;
        }
        state = match step(&state, inst, params, config) {
            Ok(next) => next,
            Err(Error::Divergence { iter, .. }) => return Err(Error::Divergence { iter, trace }),
            Err(e) => return Err(e),
        };
    };
    Ok(SolveResult {
        final_stationarity: state.stationarity(),
        iters_run: state.iter,
        final_point: state.point,
        converged,
        trace,
    })
}
