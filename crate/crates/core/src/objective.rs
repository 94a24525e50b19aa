//! Robust least-squares cost, its penalties, and closed-form gradients.
//!
//! The minimizing player owns `x ∈ ℝⁿ`, the maximizing player owns a
//! subspace `y ∈ Gr(k, n)`. The raw cost is `f(x, y) = ‖P_y x − b‖²`. The
//! ball `d(y, ŷ) ≤ ρ` is enforced by subtracting a softplus-smoothed hinge
//! on `t = d(y, ŷ)²`:
//!
//! ```text
//! F(x, y) = f(x, y) − λ·u·softplus((t − ρ²)/u)
//! ```
//!
//! Gradients are obtained by matrix calculus and are guarded by the
//! finite-difference oracles in [`crate::oracles`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{tangent_project, GrassmannPoint, HorizontalTangent, RANK_TOL};

/// Observations `b`, nominal subspace `ŷ`, and chordal radius `ρ`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    b: DVector<f64>,
    y_hat: GrassmannPoint,
    rho: f64,
}

impl ProblemInstance {
    pub fn new(b: DVector<f64>, y_hat: GrassmannPoint, rho: f64) -> Result<Self> {
        if b.len() != y_hat.n() {
            return Err(Error::dims("problem instance b", (y_hat.n(), 1), (b.len(), 1)));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("b", "entries must be finite"));
        }
        let max_rho = (y_hat.k() as f64).sqrt();
        if !(rho > 0.0 && rho < max_rho) {
            return Err(Error::invalid(
                "rho",
                format!("need 0 < rho < sqrt(k) = {max_rho}, got {rho}"),
            ));
        }
        Ok(Self { b, y_hat, rho })
    }

    /// `n = 2, k = 1`, `ŷ = span(e₁)`, `b = (cos π/16, sin π/16)`,
    /// `ρ = sin(π/8)`.
    pub fn worked_example() -> Self {
        use std::f64::consts::PI;
        let b = DVector::from_vec(vec![(PI / 16.0).cos(), (PI / 16.0).sin()]);
        Self {
            b,
            y_hat: GrassmannPoint::line(0.0),
            rho: (PI / 8.0).sin(),
        }
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn y_hat(&self) -> &GrassmannPoint {
        &self.y_hat
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn n(&self) -> usize {
        self.y_hat.n()
    }

    pub fn k(&self) -> usize {
        self.y_hat.k()
    }
}

/// Penalty weight `λ ≥ 0` and smoothing width `u > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    lambda: f64,
    u: f64,
}

impl PenaltyParams {
    pub fn new(lambda: f64, u: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("need lambda >= 0, got {lambda}")));
        }
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::invalid("u", format!("need u > 0, got {u}")));
        }
        Ok(Self { lambda, u })
    }

    /// `λ = 70`, `u = 0.01`.
    pub fn worked_example() -> Self {
        Self {
            lambda: 70.0,
            u: 0.01,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.u)
    }
}

/// A point `(x, y)` of ℝⁿ × Gr(k, n).
#[derive(Debug, Clone)]
pub struct ObjectivePoint {
    pub x: DVector<f64>,
    pub y: GrassmannPoint,
}

impl ObjectivePoint {
    pub fn new(x: DVector<f64>, y: GrassmannPoint) -> Self {
        Self { x, y }
    }

    fn check(&self, inst: &ProblemInstance) -> Result<()> {
        if self.y.matrix().shape() != inst.y_hat.matrix().shape() {
            return Err(Error::dims(
                "objective point y",
                inst.y_hat.matrix().shape(),
                self.y.matrix().shape(),
            ));
        }
        if self.x.len() != inst.n() {
            return Err(Error::dims("objective point x", (inst.n(), 1), (self.x.len(), 1)));
        }
        Ok(())
    }
}

/// Residual `r = Y(Yᵀx) − b` together with `Yᵀx`.
fn residual(p: &ObjectivePoint, inst: &ProblemInstance) -> (DVector<f64>, DVector<f64>) {
    let y = p.y.matrix();
    let coeffs = y.transpose() * &p.x;
    let r = y * &coeffs - &inst.b;
    (r, coeffs)
}

/// `‖P_y x − b‖²`
pub fn cost(p: &ObjectivePoint, inst: &ProblemInstance) -> Result<f64> {
    p.check(inst)?;
    Ok(residual(p, inst).0.norm_squared())
}

/// `2·P_y(P_y x − b)`
pub fn grad_x_cost(p: &ObjectivePoint, inst: &ProblemInstance) -> Result<DVector<f64>> {
    p.check(inst)?;
    let (r, _) = residual(p, inst);
    let y = p.y.matrix();
    Ok(y * (y.transpose() * r) * 2.0)
}

/// Horizontal projection of the Euclidean gradient `2(r xᵀ + x rᵀ)Y`.
pub fn rgrad_y_cost(p: &ObjectivePoint, inst: &ProblemInstance) -> Result<HorizontalTangent> {
    p.check(inst)?;
    let (r, coeffs) = residual(p, inst);
    let y = p.y.matrix();
    let rty = y.transpose() * &r;
    let g: DMatrix<f64> = (&r * coeffs.transpose() + &p.x * rty.transpose()) * 2.0;
    tangent_project(p.y.rep(), &g)
}

/// `d(y, ŷ)² = k − ‖ŶᵀY‖_F²`, clamped into `[0, k]`.
pub fn squared_center_distance(y: &GrassmannPoint, inst: &ProblemInstance) -> Result<f64> {
    if y.matrix().shape() != inst.y_hat.matrix().shape() {
        return Err(Error::dims(
            "squared_center_distance",
            inst.y_hat.matrix().shape(),
            y.matrix().shape(),
        ));
    }
    let k = inst.k() as f64;
    let overlap = (inst.y_hat.matrix().transpose() * y.matrix()).norm_squared();
    Ok((k - overlap).clamp(0.0, k))
}

/// Riemannian gradient of `d(y, ŷ)²`.
pub fn rgrad_y_center_distance(
    y: &GrassmannPoint,
    inst: &ProblemInstance,
) -> Result<HorizontalTangent> {
    if y.matrix().shape() != inst.y_hat.matrix().shape() {
        return Err(Error::dims(
            "rgrad_y_center_distance",
            inst.y_hat.matrix().shape(),
            y.matrix().shape(),
        ));
    }
    let yh = inst.y_hat.matrix();
    let g = yh * (yh.transpose() * y.matrix()) * -2.0;
    tangent_project(y.rep(), &g)
}

/// `max(z, 0) + log1p(exp(−|z|))`, finite for every finite `z`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(−z))` without overflow.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `λ·u·softplus((t − ρ²)/u)`, the nonnegative term subtracted from the cost.
pub fn smoothed_penalty(t: f64, params: &PenaltyParams, rho: f64) -> f64 {
    params.lambda * params.u * softplus((t - rho * rho) / params.u)
}

/// Derivative of [`smoothed_penalty`] with respect to `t`.
pub fn smoothed_penalty_slope(t: f64, params: &PenaltyParams, rho: f64) -> f64 {
    params.lambda * logistic((t - rho * rho) / params.u)
}

/// `λ·max(0, t − ρ²)`, the unsmoothed penalty.
pub fn hinge_penalty(t: f64, lambda: f64, rho: f64) -> f64 {
    lambda * (t - rho * rho).max(0.0)
}

/// Smoothed penalized objective `f(x, y) − λ·u·softplus((d² − ρ²)/u)`.
pub fn penalized_value(
    p: &ObjectivePoint,
    inst: &ProblemInstance,
    params: &PenaltyParams,
) -> Result<f64> {
    let f = cost(p, inst)?;
    let t = squared_center_distance(&p.y, inst)?;
    Ok(f - smoothed_penalty(t, params, inst.rho))
}

/// Partial gradients of the penalized objective at one point.
#[derive(Debug, Clone)]
pub struct PenalizedGradients {
    pub x: DVector<f64>,
    pub y: HorizontalTangent,
}

impl PenalizedGradients {
    pub fn x_norm(&self) -> f64 {
        self.x.norm()
    }

    pub fn y_norm(&self) -> f64 {
        self.y.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.matrix().iter()).all(|v| v.is_finite())
    }
}

pub fn penalized_grads(
    p: &ObjectivePoint,
    inst: &ProblemInstance,
    params: &PenaltyParams,
) -> Result<PenalizedGradients> {
    let gx = grad_x_cost(p, inst)?;
    let gy_cost = rgrad_y_cost(p, inst)?;
    if params.lambda == 0.0 {
        return Ok(PenalizedGradients { x: gx, y: gy_cost });
    }
    let t = squared_center_distance(&p.y, inst)?;
    let slope = smoothed_penalty_slope(t, params, inst.rho);
    let gy_dist = rgrad_y_center_distance(&p.y, inst)?;
    let gy = gy_cost.lin_comb(1.0, &gy_dist, -slope)?;
    Ok(PenalizedGradients { x: gx, y: gy })
}

/// Ordinary least squares `argmin ‖Ax − b‖²` through a thin QR of `A`.
pub fn baseline_ls_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = a.shape();
    if b.len() != n {
        return Err(Error::dims("baseline_ls_solve", (n, 1), (b.len(), 1)));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(
            "least-squares design matrix",
            format!("need 1 <= k <= n, got n={n}, k={k}"),
        ));
    }
    // nalgebra's min skips NaN, so non-finite input is mapped to NaN here.
    let smallest = if a.iter().all(|v| v.is_finite()) {
        a.singular_values().min()
    } else {
        f64::NAN
    };
    if !(smallest >= RANK_TOL) {
        return Err(Error::RankDeficiency {
            smallest,
            threshold: RANK_TOL,
        });
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficiency {
            smallest,
            threshold: RANK_TOL,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{chordal_distance, random_point};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, LN_2, PI};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn example_point(x: &[f64]) -> ObjectivePoint {
        ObjectivePoint::new(v(x), GrassmannPoint::line(0.0))
    }

    #[test]
    fn instance_validation() {
        let y = GrassmannPoint::line(0.0);
        assert!(ProblemInstance::new(v(&[1.0, 0.0]), y.clone(), 1.0).is_err());
        assert!(ProblemInstance::new(v(&[1.0, 0.0]), y.clone(), 0.0).is_err());
        assert!(ProblemInstance::new(v(&[1.0, 0.0, 0.0]), y.clone(), 0.5).is_err());
        assert!(ProblemInstance::new(v(&[1.0, 0.0]), y, 0.5).is_ok());
        assert!(PenaltyParams::new(-1.0, 0.1).is_err());
        assert!(PenaltyParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn cost_examples() {
        let inst = ProblemInstance::worked_example();
        // b on the subspace and x = b gives zero cost.
        let on = ProblemInstance::new(v(&[0.7, 0.0]), GrassmannPoint::line(0.0), 0.3).unwrap();
        assert_eq!(cost(&example_point(&[0.7, 0.0]), &on).unwrap(), 0.0);
        // (1 − cos π/16)² + sin²(π/16) = 2 − 2 cos(π/16)
        let c = cost(&example_point(&[1.0, 0.0]), &inst).unwrap();
        assert_abs_diff_eq!(c, 2.0 - 2.0 * (PI / 16.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(c, 0.038_429_4, epsilon = 1e-7);
        assert_abs_diff_eq!(
            cost(&example_point(&[0.0, 0.0]), &inst).unwrap(),
            inst.b().norm_squared(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn cost_dimension_mismatch() {
        let inst = ProblemInstance::worked_example();
        assert!(matches!(
            cost(&example_point(&[0.0, 0.0, 1.0]), &inst),
            Err(Error::Dimension { .. })
        ));
        let bad_y = ObjectivePoint::new(v(&[0.0, 0.0, 0.0]), random_point(3, 1, 1).unwrap());
        assert!(matches!(grad_x_cost(&bad_y, &inst), Err(Error::Dimension { .. })));
        assert!(matches!(rgrad_y_cost(&bad_y, &inst), Err(Error::Dimension { .. })));
    }

    #[test]
    fn grad_x_examples() {
        let inst = ProblemInstance::worked_example();
        // Yᵀx = Yᵀb zeroes the gradient regardless of the orthogonal part.
        let b = inst.b().clone();
        let g = grad_x_cost(&example_point(&[b[0], 5.0]), &inst).unwrap();
        assert!(g.norm() <= 1e-15);

        let on = ProblemInstance::new(v(&[0.7, 0.0]), GrassmannPoint::line(0.0), 0.3).unwrap();
        let g = grad_x_cost(&example_point(&[0.0, 0.0]), &on).unwrap();
        assert_abs_diff_eq!(g[0], -1.4, epsilon = 1e-15);
        assert_eq!(g[1], 0.0);

        let g = grad_x_cost(&example_point(&[1.0, 0.0]), &inst).unwrap();
        assert_abs_diff_eq!(g[0], 2.0 * (1.0 - (PI / 16.0).cos()), epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], 0.038_429_4, epsilon = 1e-7);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn rgrad_y_examples() {
        let inst = ProblemInstance::worked_example();
        let y = random_point(2, 1, 3).unwrap();
        let g = rgrad_y_cost(&ObjectivePoint::new(v(&[0.0, 0.0]), y), &inst).unwrap();
        assert_eq!(g.norm(), 0.0);

        let zero_b = ProblemInstance::new(v(&[0.0, 0.0]), GrassmannPoint::line(0.0), 0.3).unwrap();
        let g = rgrad_y_cost(&example_point(&[1.0, 0.0]), &zero_b).unwrap();
        assert!(g.norm() <= 1e-15);
    }

    #[test]
    fn center_distance_examples() {
        let inst = ProblemInstance::worked_example();
        assert_eq!(squared_center_distance(&GrassmannPoint::line(0.0), &inst).unwrap(), 0.0);
        assert_abs_diff_eq!(
            squared_center_distance(&GrassmannPoint::line(FRAC_PI_2), &inst).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(rgrad_y_center_distance(&GrassmannPoint::line(0.0), &inst).unwrap().norm() <= 1e-15);
        assert!(
            rgrad_y_center_distance(&GrassmannPoint::line(FRAC_PI_2), &inst)
                .unwrap()
                .norm()
                <= 1e-15
        );

        let y_hat = random_point(6, 2, 10).unwrap();
        let inst = ProblemInstance::new(DVector::zeros(6), y_hat.clone(), 0.5).unwrap();
        for seed in 11..20 {
            let y = random_point(6, 2, seed).unwrap();
            let d = chordal_distance(&y, &y_hat).unwrap();
            assert_abs_diff_eq!(
                squared_center_distance(&y, &inst).unwrap(),
                d * d,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn softplus_and_penalty_examples() {
        let params = PenaltyParams::new(3.0, 0.2).unwrap();
        let rho = 0.4;
        assert_abs_diff_eq!(
            smoothed_penalty(rho * rho, &params, rho),
            3.0 * 0.2 * LN_2,
            epsilon = 1e-15
        );
        let far_inside = rho * rho - 50.0 * params.u();
        let p = smoothed_penalty(far_inside, &params, rho);
        assert!(p > 0.0 && p <= 3.0 * 0.2 * 2e-22);
        assert_abs_diff_eq!(
            smoothed_penalty(rho * rho + params.u(), &params, rho),
            3.0 * 0.2 * 1.313_261_687_518_222_8,
            epsilon = 1e-14
        );
        assert!(softplus(1e4).is_finite());
        assert_eq!(softplus(1e4), 1e4);
        assert!(logistic(-1e4) >= 0.0 && logistic(1e4) <= 1.0);

        assert_eq!(hinge_penalty(0.1, 70.0, 0.5), 0.0);
        assert_abs_diff_eq!(hinge_penalty(1.25, 70.0, 0.5), 70.0, epsilon = 1e-12);
        let example = PenaltyParams::worked_example();
        let rho = (PI / 8.0).sin();
        assert_abs_diff_eq!(
            smoothed_penalty(rho * rho, &example, rho),
            0.485_203,
            epsilon = 1e-6
        );
    }

    #[test]
    fn lambda_zero_turns_penalty_off() {
        let inst = ProblemInstance::new(
            v(&[0.3, -1.0, 0.5, 2.0]),
            random_point(4, 2, 1).unwrap(),
            0.6,
        )
        .unwrap();
        let params = PenaltyParams::new(0.0, 0.05).unwrap();
        let p = ObjectivePoint::new(v(&[1.0, 0.2, -0.3, 0.4]), random_point(4, 2, 2).unwrap());
        assert_eq!(penalized_value(&p, &inst, &params).unwrap(), cost(&p, &inst).unwrap());
        let g = penalized_grads(&p, &inst, &params).unwrap();
        assert_eq!(g.y.matrix(), rgrad_y_cost(&p, &inst).unwrap().matrix());
    }

    #[test]
    fn penalty_negligible_at_center() {
        let inst = ProblemInstance::worked_example();
        let params = PenaltyParams::worked_example();
        let factor = logistic(-inst.rho().powi(2) / params.u());
        assert!(factor < 5e-7, "factor = {factor}");
        // Tilt x so the cost gradient in y is not zero.
        let p = example_point(&[0.4, 1.1]);
        let g = penalized_grads(&p, &inst, &params).unwrap();
        let gc = rgrad_y_cost(&p, &inst).unwrap();
        let rel = (g.y.matrix() - gc.matrix()).norm() / gc.norm();
        assert!(rel <= 1e-5, "rel = {rel}");
    }

    #[test]
    fn penalty_slope_bounds() {
        // u = 0.1 keeps (t − ρ²)/u small enough that the logistic does not
        // round to exactly 0 or 1 on [0, 1].
        let params = PenaltyParams::new(70.0, 0.1).unwrap();
        let rho = 0.4;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let s = smoothed_penalty_slope(t, &params, rho);
            assert!(s > 0.0 && s < 70.0);
            let p = smoothed_penalty(t, &params, rho);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn baseline_ls_examples() {
        let b = v(&[1.0, -2.0, 3.0]);
        let x = baseline_ls_solve(&DMatrix::identity(3, 3), &b).unwrap();
        assert!((x - &b).norm() <= 1e-14);

        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
        let coeffs = v(&[0.5, -1.5]);
        let b = &a * &coeffs;
        let x = baseline_ls_solve(&a, &b).unwrap();
        assert!((&a * x - b).norm() <= 1e-14);

        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(
            baseline_ls_solve(&a, &v(&[1.0, 0.0, 0.0])),
            Err(Error::RankDeficiency { .. })
        ));
    }

    #[test]
    fn baseline_ls_normal_equations() {
        let a = DMatrix::from_row_slice(
            6,
            3,
            &[
                2.0, 0.1, -0.3, 0.2, 1.5, 0.4, -0.1, 0.3, 1.8, 0.5, -0.2, 0.1, 0.0, 0.7, -0.6,
                1.1, 0.0, 0.2,
            ],
        );
        let b = v(&[1.0, -0.5, 0.25, 2.0, -1.0, 0.3]);
        let x = baseline_ls_solve(&a, &b).unwrap();
        let normal = a.transpose() * (&a * x - &b);
        assert!(normal.norm() <= 1e-10, "{normal}");
    }

    #[test]
    fn inner_minimizer_property() {
        let y = random_point(5, 2, 4).unwrap();
        let b = v(&[0.3, -1.2, 0.8, 0.1, 2.0]);
        let inst = ProblemInstance::new(b.clone(), y.clone(), 0.5).unwrap();
        let coeffs = baseline_ls_solve(y.matrix(), &b).unwrap();
        let p = ObjectivePoint::new(y.matrix() * coeffs, y.clone());
        let resid = &b - y.matrix() * (y.matrix().transpose() * &b);
        assert_abs_diff_eq!(cost(&p, &inst).unwrap(), resid.norm_squared(), epsilon = 1e-12);
        assert!(grad_x_cost(&p, &inst).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn representative_invariance() {
        use crate::geometry::random_orthogonal;
        let y_hat = random_point(6, 3, 30).unwrap();
        let inst = ProblemInstance::new(v(&[1.0, 0.0, -1.0, 0.5, 0.2, 0.3]), y_hat, 0.8).unwrap();
        let params = PenaltyParams::new(70.0, 0.01).unwrap();
        let y = random_point(6, 3, 31).unwrap();
        let q = random_orthogonal(3, 32);
        let y_rot = y.rotate_rep(&q).unwrap();
        let x = v(&[0.2, 0.3, -0.1, 1.0, 0.0, -0.7]);
        let p = ObjectivePoint::new(x.clone(), y);
        let p_rot = ObjectivePoint::new(x, y_rot);
        let g = penalized_grads(&p, &inst, &params).unwrap();
        let g_rot = penalized_grads(&p_rot, &inst, &params).unwrap();
        assert_abs_diff_eq!(cost(&p, &inst).unwrap(), cost(&p_rot, &inst).unwrap(), epsilon = 1e-10);
        assert_abs_diff_eq!(
            penalized_value(&p, &inst, &params).unwrap(),
            penalized_value(&p_rot, &inst, &params).unwrap(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(g.x_norm(), g_rot.x_norm(), epsilon = 1e-10);
        assert_abs_diff_eq!(g.y_norm(), g_rot.y_norm(), epsilon = 1e-10);
        // The y-gradient transforms as G ↦ G·Q.
        assert!((g.y.matrix() * &q - g_rot.y.matrix()).norm() <= 1e-10);
    }
}
