//! Grassmannian Gr(k, n) through orthonormal (Stiefel) representatives.
//!
//! A point of Gr(k, n) is stored as an n×k matrix `Y` with `YᵀY = I`. Any
//! `Y·Q` with `Q` orthogonal represents the same subspace, so every
//! subspace-level quantity here (distances, projectors, angles) is computed
//! in a way that does not depend on the chosen representative.
//!
//! Tangent vectors at `span(Y)` are identified with horizontal matrices
//! `H` (`YᵀH = 0`). The metric is the trace inner product
//! `⟨Z₁, Z₂⟩ = trace(Z₁ᵀZ₂)`, and geodesics follow the closed form
//!
//! ```text
//! H = U Σ Vᵀ  (thin SVD; evaluated through the eigensystem of HᵀH)
//! Exp_Y(H) = span( Y V cos(Σ) Vᵀ + U sin(Σ) Vᵀ )
//! ```
//!
//! The ball constraint uses the chordal distance
//! `(1/√2)‖Y₁Y₁ᵀ − Y₂Y₂ᵀ‖_F = (Σ sin²θᵢ)^{1/2}`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Columns are considered orthonormal when `‖YᵀY − I‖_F` is at most this.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Two subspaces are equal when their chordal distance is at most this.
pub const SUBSPACE_EQ_TOL: f64 = 1e-8;

/// Smallest singular value accepted by [`orthonormalize`].
pub const RANK_TOL: f64 = 1e-12;

/// An n×k matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelRep {
    matrix: DMatrix<f64>,
}

impl StiefelRep {
    /// Wraps `matrix`, checking that its columns are orthonormal.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (n, k) = matrix.shape();
        if k == 0 || k > n {
            return Err(Error::invalid(
                "stiefel representative",
                format!("need 1 <= k <= n, got n={n}, k={k}"),
            ));
        }
        let defect = orthonormality_defect(&matrix);
        if !(defect <= ORTHONORMALITY_TOL) {
            return Err(Error::invalid(
                "stiefel representative",
                format!("columns not orthonormal (‖YᵀY − I‖_F = {defect:e})"),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn k(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    /// `‖YᵀY − I‖_F`
    pub fn defect(&self) -> f64 {
        orthonormality_defect(&self.matrix)
    }
}

fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    (m.transpose() * m - DMatrix::<f64>::identity(k, k)).norm()
}

/// A k-dimensional subspace of ℝⁿ.
///
/// `PartialEq` is deliberately not derived: equality of subspaces is
/// [`GrassmannPoint::same_subspace`], which ignores the representative.
#[derive(Debug, Clone)]
pub struct GrassmannPoint {
    rep: StiefelRep,
}

impl GrassmannPoint {
    pub fn new(rep: StiefelRep) -> Self {
        Self { rep }
    }

    /// Span of the columns of `m` (which need not be orthonormal).
    pub fn span_of(m: &DMatrix<f64>) -> Result<Self> {
        orthonormalize(m).map(Self::new)
    }

    /// The line through `(cos angle, sin angle)` in ℝ².
    pub fn line(angle: f64) -> Self {
        let m = DMatrix::from_column_slice(2, 1, &[angle.cos(), angle.sin()]);
        Self {
            rep: StiefelRep { matrix: m },
        }
    }

    /// `span(e₁, …, e_k)` in ℝⁿ.
    pub fn coordinate(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::invalid(
                "coordinate subspace",
                format!("need 1 <= k <= n, got n={n}, k={k}"),
            ));
        }
        let m = DMatrix::from_fn(n, k, |i, j| if i == j { 1.0 } else { 0.0 });
        Ok(Self {
            rep: StiefelRep { matrix: m },
        })
    }

    pub fn rep(&self) -> &StiefelRep {
        &self.rep
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rep.matrix
    }

    pub fn n(&self) -> usize {
        self.rep.n()
    }

    pub fn k(&self) -> usize {
        self.rep.k()
    }

    pub fn same_subspace(&self, other: &GrassmannPoint) -> Result<bool> {
        Ok(chordal_distance(self, other)? <= SUBSPACE_EQ_TOL)
    }

    /// Angle in (−π/2, π/2] of a line in ℝ².
    pub fn line_angle(&self) -> Result<f64> {
        if self.shape() != (2, 1) {
            return Err(Error::dims("line_angle", (2, 1), self.shape()));
        }
        let m = self.matrix();
        Ok(wrap_line_angle(m[(1, 0)].atan2(m[(0, 0)])))
    }

    /// The same subspace with representative `Y·Q`, `Q` orthogonal.
    pub fn rotate_rep(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.shape() != (self.k(), self.k()) {
            return Err(Error::dims("rotate_rep", (self.k(), self.k()), q.shape()));
        }
        StiefelRep::new(self.matrix() * q).map(Self::new)
    }

    fn shape(&self) -> (usize, usize) {
        self.rep.shape()
    }
}

/// Reduces an angle modulo π into (−π/2, π/2]; lines through the origin
/// have period π.
pub fn wrap_line_angle(angle: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut a = angle.rem_euclid(PI);
    if a > FRAC_PI_2 {
        a -= PI;
    }
    a
}

/// A horizontal tangent vector `H` at a representative `Y` (`YᵀH = 0`).
#[derive(Debug, Clone)]
pub struct HorizontalTangent {
    base: StiefelRep,
    matrix: DMatrix<f64>,
}

impl HorizontalTangent {
    pub fn zero(base: &StiefelRep) -> Self {
        let (n, k) = base.shape();
        Self {
            base: base.clone(),
            matrix: DMatrix::zeros(n, k),
        }
    }

    pub fn base(&self) -> &StiefelRep {
        &self.base
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// `‖YᵀH‖_F`
    pub fn horizontality_defect(&self) -> f64 {
        (self.base.matrix().transpose() * &self.matrix).norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            base: self.base.clone(),
            matrix: &self.matrix * s,
        }
    }

    /// `a·self + b·other`; both must share the base.
    pub fn lin_comb(&self, a: f64, other: &HorizontalTangent, b: f64) -> Result<Self> {
        if !same_base(&self.base, &other.base) {
            return Err(Error::BaseMismatch);
        }
        Ok(Self {
            base: self.base.clone(),
            matrix: &self.matrix * a + &other.matrix * b,
        })
    }

    /// Trace inner product `trace(Aᵀ B)`.
    pub fn inner(&self, other: &HorizontalTangent) -> f64 {
        self.matrix.dot(&other.matrix)
    }
}

fn same_base(a: &StiefelRep, b: &StiefelRep) -> bool {
    a.shape() == b.shape() && (a.matrix() - b.matrix()).norm() <= 1e-12
}

/// Subspace angles θ₁ ≤ … ≤ θ_k in [0, π/2].
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles(Vec<f64>);

impl PrincipalAngles {
    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    /// `(Σ sin²θᵢ)^{1/2}`
    pub fn chordal(&self) -> f64 {
        self.0.iter().map(|t| t.sin().powi(2)).sum::<f64>().sqrt()
    }
}

/// Thin QR with a nonnegative R diagonal. Fails when the smallest singular
/// value of `m` is below [`RANK_TOL`].
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<StiefelRep> {
    let (n, k) = m.shape();
    if k == 0 || k > n {
        return Err(Error::invalid(
            "matrix to orthonormalize",
            format!("need 1 <= k <= n, got n={n}, k={k}"),
        ));
    }
    // nalgebra's min skips NaN, so non-finite input is mapped to NaN here.
    let smallest = if m.iter().all(|v| v.is_finite()) {
        m.singular_values().min()
    } else {
        f64::NAN
    };
    if !(smallest >= RANK_TOL) {
        return Err(Error::RankDeficiency {
            smallest,
            threshold: RANK_TOL,
        });
    }
    // The span is scale-invariant; rescaling avoids overflow inside the QR.
    let qr = (m / m.amax()).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficiency {
            smallest: f64::NAN,
            threshold: RANK_TOL,
        });
    }
    Ok(StiefelRep { matrix: q })
}

/// Orthogonal projection `(I − YYᵀ)G` onto the horizontal space at `Y`.
pub fn tangent_project(y: &StiefelRep, g: &DMatrix<f64>) -> Result<HorizontalTangent> {
    if g.shape() != y.shape() {
        return Err(Error::dims("tangent_project", y.shape(), g.shape()));
    }
    let ym = y.matrix();
    let matrix = g - ym * (ym.transpose() * g);
    Ok(HorizontalTangent {
        base: y.clone(),
        matrix,
    })
}

/// Endpoint of the unit-time geodesic from `span(Y)` with velocity `H`.
///
/// The result is re-orthonormalized so the representative does not drift
/// away from the Stiefel manifold over many steps.
pub fn exp_map(y: &StiefelRep, h: &HorizontalTangent) -> Result<GrassmannPoint> {
    if h.matrix.shape() != y.shape() {
        return Err(Error::dims("exp_map", y.shape(), h.matrix.shape()));
    }
    if !same_base(y, &h.base) {
        return Err(Error::BaseMismatch);
    }
    // HᵀH = V Σ² Vᵀ, and U sin(Σ) Vᵀ = H V sinc(Σ) Vᵀ. Both cos and sinc are
    // smooth in σ², so U is never formed and zero singular values are harmless.
    // nalgebra's SVD with vectors is unreliable on rank-deficient H.
    // Scaling by the largest entry keeps HᵀH from overflowing.
    let scale = h.matrix.amax();
    if scale == 0.0 {
        return Ok(GrassmannPoint::new(y.clone()));
    }
    let hs = &h.matrix / scale;
    let eig = (hs.transpose() * &hs).symmetric_eigen();
    let v = eig.eigenvectors;
    let sigma = eig.eigenvalues.map(|l| if l.is_nan() { l } else { scale * l.max(0.0).sqrt() });
    let cos = DMatrix::from_diagonal(&sigma.map(f64::cos));
    let sinc = DMatrix::from_diagonal(&sigma.map(|s| if s < 1e-8 { 1.0 - s * s / 6.0 } else { s.sin() / s }));
    let vt = v.transpose();
    let z = y.matrix() * &v * cos * &vt + &h.matrix * &v * sinc * &vt;
    orthonormalize(&z).map(GrassmannPoint::new)
}

fn check_same_dims(context: &'static str, a: &GrassmannPoint, b: &GrassmannPoint) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dims(context, a.shape(), b.shape()));
    }
    Ok(())
}

/// θᵢ = arccos σᵢ(Y₁ᵀY₂), with σᵢ clamped to [0, 1]. Loses accuracy for
/// angles below roughly 1e−8; use [`chordal_distance`] for distances.
pub fn principal_angles(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<PrincipalAngles> {
    check_same_dims("principal_angles", a, b)?;
    let c = a.matrix().transpose() * b.matrix();
    let mut angles: Vec<f64> = c
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(PrincipalAngles(angles))
}

/// `(1/√2)‖Y₁Y₁ᵀ − Y₂Y₂ᵀ‖_F`
pub fn chordal_distance(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    check_same_dims("chordal_distance", a, b)?;
    let pa = projection_matrix(a);
    let pb = projection_matrix(b);
    Ok((pa - pb).norm() * std::f64::consts::FRAC_1_SQRT_2)
}

/// `P = YYᵀ`
pub fn projection_matrix(y: &GrassmannPoint) -> DMatrix<f64> {
    let m = y.matrix();
    m * m.transpose()
}

/// `P x = Y(Yᵀx)` without forming `P`.
pub fn project_vector(y: &GrassmannPoint, x: &DVector<f64>) -> DVector<f64> {
    let m = y.matrix();
    m * (m.transpose() * x)
}

fn normal_matrix(rng: &mut ChaCha8Rng, nrows: usize, ncols: usize) -> DMatrix<f64> {
    // Column-major fill so the draw order is fixed by shape alone.
    DMatrix::from_iterator(
        nrows,
        ncols,
        (0..nrows * ncols).map(|_| StandardNormal.sample(rng)),
    )
}

/// Uniformly distributed point of Gr(k, n), deterministic in `seed`.
pub fn random_point(n: usize, k: usize, seed: u64) -> Result<GrassmannPoint> {
    if k == 0 || k > n {
        return Err(Error::invalid(
            "random_point",
            format!("need 1 <= k <= n, got n={n}, k={k}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A Gaussian matrix is full rank with probability one; retry on the
    // measure-zero failure.
    loop {
        let m = normal_matrix(&mut rng, n, k);
        match orthonormalize(&m) {
            Ok(rep) => return Ok(GrassmannPoint::new(rep)),
            Err(Error::RankDeficiency { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Random horizontal vector at `y` with Frobenius norm `scale` (zero when
/// `scale == 0` or the horizontal space is trivial, i.e. `k == n`).
pub fn random_tangent(y: &StiefelRep, seed: u64, scale: f64) -> Result<HorizontalTangent> {
    if !(scale >= 0.0) {
        return Err(Error::invalid("tangent scale", format!("{scale} < 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = normal_matrix(&mut rng, y.n(), y.k());
    let h = tangent_project(y, &g)?;
    let norm = h.norm();
    if scale == 0.0 || norm == 0.0 {
        return Ok(HorizontalTangent::zero(y));
    }
    Ok(h.scale(scale / norm))
}

/// Haar-distributed k×k orthogonal matrix.
pub fn random_orthogonal(k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let m = normal_matrix(&mut rng, k, k);
        if let Ok(q) = orthonormalize(&m) {
            return q.matrix;
        }
    }
}
