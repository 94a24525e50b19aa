//! Independent reference computations used to validate the solver.
//!
//! * Central finite differences for both partial gradients.
//! * Exhaustive grid search of the constrained problem on ℝ² × Gr(1, 2),
//!   where a line is parameterized by its angle φ.
//! * A sampling probe of the local-minimax inequalities.
//! * A penalty-weight sweep that tracks constraint violation.
//!
//! The 2-D routines evaluate `‖(uᵀx)u − b‖²` with `u = (cos φ, sin φ)`
//! directly and do not go through [`crate::objective`].

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{exp_map, random_point, random_tangent, wrap_line_angle, GrassmannPoint, HorizontalTangent};
use crate::objective::{
    penalized_grads, penalized_value, ObjectivePoint, PenalizedGradients, PenaltyParams,
    ProblemInstance,
};
use crate::solver::{random_init, solve, SolverConfig};

/// Denominator floor for relative errors, so that two gradients that are
/// both numerically zero compare as equal.
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// `|a − b| / max(|a|, |b|, REL_ERR_FLOOR)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Vector version of [`relative_error`] in the Euclidean norm.
pub fn relative_error_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(REL_ERR_FLOOR)
}

/// Central differences of the penalized objective in each coordinate of `x`.
pub fn fd_grad_x(
    p: &ObjectivePoint,
    inst: &ProblemInstance,
    params: &PenaltyParams,
    h: f64,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(p.x.len());
    for i in 0..p.x.len() {
        let mut plus = p.clone();
        plus.x[i] += h;
        let mut minus = p.clone();
        minus.x[i] -= h;
        g[i] = (penalized_value(&plus, inst, params)? - penalized_value(&minus, inst, params)?)
            / (2.0 * h);
    }
    Ok(g)
}

/// Central difference of the penalized objective along the geodesic
/// `t ↦ Exp_Y(tH)`.
pub fn fd_dirderiv_y(
    p: &ObjectivePoint,
    dir: &HorizontalTangent,
    inst: &ProblemInstance,
    params: &PenaltyParams,
    h: f64,
) -> Result<f64> {
    let y_plus = exp_map(p.y.rep(), &dir.scale(h))?;
    let y_minus = exp_map(p.y.rep(), &dir.scale(-h))?;
    let f_plus = penalized_value(&ObjectivePoint::new(p.x.clone(), y_plus), inst, params)?;
    let f_minus = penalized_value(&ObjectivePoint::new(p.x.clone(), y_minus), inst, params)?;
    Ok((f_plus - f_minus) / (2.0 * h))
}

/// Random instance of the given size: Gaussian `b`, uniform `ŷ`, and
/// `ρ` uniform in `[0.1, 0.9]·√k`.
pub fn random_instance(n: usize, k: usize, seed: u64) -> Result<ProblemInstance> {
    let y_hat = random_point(n, k, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let b = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
    let rho = (k as f64).sqrt() * rng.random_range(0.1..0.9);
    ProblemInstance::new(b, y_hat, rho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    /// Random points `(x, y)` per instance.
    pub points: usize,
    /// Random unit horizontal directions per point.
    pub directions: usize,
    pub h_x: f64,
    pub h_y: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            points: 10,
            directions: 10,
            h_x: 1e-6,
            h_y: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err_x: f64,
    pub max_rel_err_y: f64,
    /// Seed of the point that produced `max_rel_err_x`.
    pub worst_x_seed: u64,
    /// Seed of the point and index of the direction behind `max_rel_err_y`.
    pub worst_y: (u64, usize),
    pub points_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol_x: f64, tol_y: f64) -> bool {
        self.max_rel_err_x <= tol_x && self.max_rel_err_y <= tol_y
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_rel_err_x > self.max_rel_err_x {
            self.max_rel_err_x = other.max_rel_err_x;
            self.worst_x_seed = other.worst_x_seed;
        }
        if other.max_rel_err_y > self.max_rel_err_y {
            self.max_rel_err_y = other.max_rel_err_y;
            self.worst_y = other.worst_y;
        }
        self.points_checked += other.points_checked;
    }
}

/// Compares `grads` against finite differences at random points of `inst`.
pub fn check_gradients_with<F>(
    inst: &ProblemInstance,
    params: &PenaltyParams,
    cfg: &GradCheckConfig,
    grads: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ObjectivePoint) -> Result<PenalizedGradients>,
{
    let mut report = GradCheckReport::default();
    for i in 0..cfg.points {
        let seed = cfg.seed.wrapping_add(i as u64);
        let p = random_init(inst, seed)?;
        let g = grads(&p)?;
        let err_x = relative_error_vec(&g.x, &fd_grad_x(&p, inst, params, cfg.h_x)?);
        if i == 0 || err_x > report.max_rel_err_x {
            report.max_rel_err_x = err_x;
            report.worst_x_seed = seed;
        }
        for d in 0..cfg.directions {
            let dir = random_tangent(p.y.rep(), seed.wrapping_mul(1_000_003).wrapping_add(d as u64), 1.0)?;
            let exact = g.y.inner(&dir);
            let fd = fd_dirderiv_y(&p, &dir, inst, params, cfg.h_y)?;
            let err_y = relative_error(exact, fd);
            if err_y > report.max_rel_err_y {
                report.max_rel_err_y = err_y;
                report.worst_y = (seed, d);
            }
        }
        report.points_checked += 1;
    }
    Ok(report)
}

pub fn check_gradients(
    inst: &ProblemInstance,
    params: &PenaltyParams,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    check_gradients_with(inst, params, cfg, |p| penalized_grads(p, inst, params))
}

/// Grid resolution for the 2-D brute-force oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Samples of the line angle over the feasible arc (endpoints included).
    pub angle_count: usize,
    pub x_box_halfwidth: f64,
    pub x_resolution: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            angle_count: 4001,
            x_box_halfwidth: 2.0,
            x_resolution: 0.01,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.angle_count < 3 {
            return Err(Error::invalid("angle_count", "need angle_count >= 3"));
        }
        if !(self.x_box_halfwidth > 0.0) {
            return Err(Error::invalid("x_box_halfwidth", "need a positive half-width"));
        }
        if !(self.x_resolution > 0.0 && self.x_resolution < self.x_box_halfwidth) {
            return Err(Error::invalid(
                "x_resolution",
                "need 0 < x_resolution < x_box_halfwidth",
            ));
        }
        Ok(())
    }
}

/// Geometry of the ball `{φ : |sin(φ − α̂)| ≤ ρ}` on Gr(1, 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleArc {
    pub center: f64,
    pub half_width: f64,
}

impl FeasibleArc {
    pub fn of(inst: &ProblemInstance) -> Result<Self> {
        if inst.n() != 2 || inst.k() != 1 {
            return Err(Error::UnsupportedInstance(format!(
                "2-D oracles need n = 2, k = 1, got n = {}, k = {}",
                inst.n(),
                inst.k()
            )));
        }
        let rho = inst.rho();
        if !(rho > 0.0) {
            return Err(Error::Infeasible);
        }
        Ok(Self {
            center: inst.y_hat().line_angle()?,
            half_width: rho.min(1.0).asin(),
        })
    }

    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    /// Offset of `phi` from the center, reduced to (−π/2, π/2].
    pub fn offset(&self, phi: f64) -> f64 {
        wrap_line_angle(phi - self.center)
    }

    pub fn contains(&self, phi: f64) -> bool {
        self.offset(phi).abs() <= self.half_width
    }

    /// Nearest feasible angle.
    pub fn clamp(&self, phi: f64) -> f64 {
        self.center + self.offset(phi).clamp(-self.half_width, self.half_width)
    }

    fn samples(&self, count: usize) -> Vec<f64> {
        let step = (self.hi() - self.lo()) / (count - 1) as f64;
        (0..count).map(|i| self.lo() + step * i as f64).collect()
    }
}

/// `‖(uᵀx)u − b‖²` for `u = (cos φ, sin φ)`.
fn line_cost(x: &[f64; 2], b: &[f64; 2], cos: f64, sin: f64) -> f64 {
    let a = cos * x[0] + sin * x[1];
    let dx = a * cos - b[0];
    let dy = a * sin - b[1];
    dx * dx + dy * dy
}

fn as_pair(v: &DVector<f64>) -> [f64; 2] {
    [v[0], v[1]]
}

/// Precomputed `(φ, cos φ, sin φ)` over the feasible arc.
struct AngleTable {
    entries: Vec<(f64, f64, f64)>,
}

impl AngleTable {
    fn new(arc: &FeasibleArc, count: usize) -> Self {
        Self {
            entries: arc
                .samples(count)
                .into_iter()
                .map(|phi| (phi, phi.cos(), phi.sin()))
                .collect(),
        }
    }

    /// First maximizer over the table.
    fn argmax(&self, x: &[f64; 2], b: &[f64; 2]) -> (f64, f64) {
        let mut best = (self.entries[0].0, f64::NEG_INFINITY);
        for &(phi, c, s) in &self.entries {
            let v = line_cost(x, b, c, s);
            if v > best.1 {
                best = (phi, v);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerMax {
    pub phi: f64,
    pub value: f64,
}

/// `max_{φ feasible} ‖P_φ x − b‖²` by exhaustive evaluation on the arc.
pub fn inner_max_2d(x: &DVector<f64>, inst: &ProblemInstance, grid: &GridSpec) -> Result<InnerMax> {
    grid.validate()?;
    let arc = FeasibleArc::of(inst)?;
    if x.len() != 2 {
        return Err(Error::dims("inner_max_2d", (2, 1), (x.len(), 1)));
    }
    let table = AngleTable::new(&arc, grid.angle_count);
    let (phi, value) = table.argmax(&as_pair(x), &as_pair(inst.b()));
    Ok(InnerMax { phi, value })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimax2d {
    pub x: DVector<f64>,
    pub phi: f64,
    pub value: f64,
}

/// Lexicographic minimum on (value, row, col) so the reduction does not
/// depend on how rayon splits the work.
fn better(a: (f64, usize, usize), b: (f64, usize, usize)) -> (f64, usize, usize) {
    if b.0 < a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

fn grid_min(
    table: &AngleTable,
    b: &[f64; 2],
    origin: [f64; 2],
    step: f64,
    count: usize,
) -> (f64, usize, usize) {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let x0 = origin[0] + step * i as f64;
            let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
            for j in 0..count {
                let x = [x0, origin[1] + step * j as f64];
                best = better(best, (table.argmax(&x, b).1, i, j));
            }
            best
        })
        .reduce(|| (f64::INFINITY, usize::MAX, usize::MAX), better)
}

/// Brute-force `min_x max_{φ feasible} ‖P_φ x − b‖²` over `[−w, w]²`,
/// followed by one 10× finer pass around the incumbent.
pub fn minimax_2d(inst: &ProblemInstance, grid: &GridSpec) -> Result<Minimax2d> {
    grid.validate()?;
    let arc = FeasibleArc::of(inst)?;
    let table = AngleTable::new(&arc, grid.angle_count);
    let b = as_pair(inst.b());
    let w = grid.x_box_halfwidth;
    let res = grid.x_resolution;

    let count = (2.0 * w / res).round() as usize + 1;
    let (_, i, j) = grid_min(&table, &b, [-w, -w], res, count);
    let coarse = [-w + res * i as f64, -w + res * j as f64];

    let fine = res / 10.0;
    let (_, i, j) = grid_min(&table, &b, [coarse[0] - res, coarse[1] - res], fine, 21);
    let x = [coarse[0] - res + fine * i as f64, coarse[1] - res + fine * j as f64];
    let (phi, value) = table.argmax(&x, &b);
    Ok(Minimax2d {
        x: DVector::from_column_slice(&x),
        phi,
        value,
    })
}

/// Raw cost at `(x, line(φ))` if φ is feasible, else `None`.
pub fn constrained_cost_2d(x: &DVector<f64>, phi: f64, inst: &ProblemInstance) -> Result<Option<f64>> {
    let arc = FeasibleArc::of(inst)?;
    if !arc.contains(phi) {
        return Ok(None);
    }
    Ok(Some(line_cost(&as_pair(x), &as_pair(inst.b()), phi.cos(), phi.sin())))
}

/// Which function the local-minimax probe tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeObjective {
    /// Raw cost with `y` restricted to the ball; the probed `y*` is first
    /// clamped onto the ball.
    Constrained,
    /// The smoothed penalized objective, unconstrained in `y`.
    Penalized(PenaltyParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Sampling radius for `x` (Euclidean) and `y` (chordal).
    pub delta: f64,
    pub sample_count: usize,
    /// Chordal radius of the inner re-maximization.
    pub h_delta: f64,
    pub tol: f64,
    /// Angles in the inner re-maximization grid (odd, so `y*` is on it).
    pub inner_angle_count: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            sample_count: 500,
            h_delta: 0.05,
            tol: 1e-8,
            inner_angle_count: 2001,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// Angle of the probed `y*` (after clamping, for the constrained objective).
    pub phi_star: f64,
    pub value_at_star: f64,
    /// Sampled `y` that were feasible and therefore tested.
    pub y_tested: usize,
    /// Count of `f(x*, y) > f(x*, y*) + tol`.
    pub y_violations: usize,
    /// Largest `f(x*, y) − f(x*, y*)`.
    pub worst_y_margin: f64,
    pub x_tested: usize,
    /// Count of `f(x*, y*) > max_{y′} f(x, y′) + tol`.
    pub x_violations: usize,
    /// Largest `f(x*, y*) − max_{y′} f(x, y′)`.
    pub worst_x_margin: f64,
}

impl ProbeReport {
    pub fn violations(&self) -> usize {
        self.y_violations + self.x_violations
    }
}

/// Samples the two local-minimax inequalities around `p_star`
/// (n = 2, k = 1 only). This gives evidence, not a certificate.
pub fn local_minimax_probe(
    p_star: &ObjectivePoint,
    inst: &ProblemInstance,
    probe: &ProbeConfig,
    objective: ProbeObjective,
) -> Result<ProbeReport> {
    let arc = FeasibleArc::of(inst)?;
    if !(probe.delta > 0.0 && probe.h_delta > 0.0) {
        return Err(Error::invalid("probe radii", "need delta > 0 and h_delta > 0"));
    }
    if probe.inner_angle_count < 3 {
        return Err(Error::invalid("inner_angle_count", "need at least 3 angles"));
    }
    let raw_phi = p_star.y.line_angle()?;
    let phi_star = match objective {
        ProbeObjective::Constrained => arc.clamp(raw_phi),
        ProbeObjective::Penalized(_) => raw_phi,
    };
    let eval = |x: &DVector<f64>, phi: f64| -> Result<Option<f64>> {
        match objective {
            ProbeObjective::Constrained => constrained_cost_2d(x, phi, inst),
            ProbeObjective::Penalized(params) => {
                let p = ObjectivePoint::new(x.clone(), GrassmannPoint::line(phi));
                penalized_value(&p, inst, &params).map(Some)
            }
        }
    };
    let x_star = &p_star.x;
    let f_star = eval(x_star, phi_star)?.expect("clamped y* is feasible");

    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let mut report = ProbeReport {
        phi_star,
        value_at_star: f_star,
        y_tested: 0,
        y_violations: 0,
        worst_y_margin: f64::NEG_INFINITY,
        x_tested: 0,
        x_violations: 0,
        worst_x_margin: f64::NEG_INFINITY,
    };

    // Lines at chordal distance s from line(φ*) sit at angle φ* ± asin(s).
    let y_radius = probe.delta.min(1.0);
    for _ in 0..probe.sample_count {
        let s: f64 = rng.random_range(-y_radius..=y_radius);
        let phi = phi_star + s.asin();
        if let Some(v) = eval(x_star, phi)? {
            let margin = v - f_star;
            report.y_tested += 1;
            report.worst_y_margin = report.worst_y_margin.max(margin);
            if margin > probe.tol {
                report.y_violations += 1;
            }
        }
    }

    let inner_half = probe.h_delta.min(1.0).asin();
    let count = probe.inner_angle_count | 1;
    let inner_angles: Vec<f64> = (0..count)
        .map(|i| phi_star - inner_half + 2.0 * inner_half * i as f64 / (count - 1) as f64)
        .collect();
    for _ in 0..probe.sample_count {
        let radius = probe.delta * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let x = DVector::from_column_slice(&[
            x_star[0] + radius * theta.cos(),
            x_star[1] + radius * theta.sin(),
        ]);
        let mut inner = f64::NEG_INFINITY;
        for &phi in &inner_angles {
            if let Some(v) = eval(&x, phi)? {
                inner = inner.max(v);
            }
        }
        let margin = f_star - inner;
        report.x_tested += 1;
        report.worst_x_margin = report.worst_x_margin.max(margin);
        if margin > probe.tol {
            report.x_violations += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub center_distance: f64,
    /// `max(0, d(y*, ŷ) − ρ)`
    pub violation: f64,
    pub converged: bool,
    pub iters_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    /// Solver failures (e.g. divergence) are kept per row as messages.
    pub outcome: std::result::Result<SweepOutcome, String>,
}

/// Solves once per penalty weight, keeping `u` and the solver settings fixed.
pub fn penalty_exactness_sweep(
    inst: &ProblemInstance,
    base: &PenaltyParams,
    config: &SolverConfig,
    lambdas: &[f64],
) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambdas", "need at least one penalty weight"));
    }
    config.validate()?;
    let params: Vec<PenaltyParams> = lambdas
        .iter()
        .map(|&l| base.with_lambda(l))
        .collect::<Result<_>>()?;
    Ok(params
        .into_par_iter()
        .map(|params| {
            let outcome = solve(inst, &params, config, None)
                .and_then(|res| {
                    let d = res.center_distance(inst)?;
                    Ok(SweepOutcome {
                        center_distance: d,
                        violation: (d - inst.rho()).max(0.0),
                        converged: res.converged,
                        iters_run: res.iters_run,
                    })
                })
                .map_err(|e| e.to_string());
            SweepRow {
                lambda: params.lambda(),
                outcome,
            }
        })
        .collect())
}

/// True when successful rows, ordered by λ, have violations that never
/// rise by more than `noise`.
pub fn violations_nonincreasing(rows: &[SweepRow], noise: f64) -> bool {
    let mut ok: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|o| (r.lambda, o.violation)))
        .collect();
    ok.sort_by(|a, b| a.0.total_cmp(&b.0));
    ok.windows(2).all(|w| w[1].1 <= w[0].1 + noise)
}
