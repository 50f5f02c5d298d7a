//! Intrinsic manifold models: chart metric, Christoffel symbols, Ricci
//! tensor and drift, plus the curvature/drift endomorphisms driving the
//! damped-transport equations.
//!
//! Built-in models:
//!
//! - [`EuclideanModel`]: global chart on ℝⁿ with metric `I` and a drift that
//!   is zero, Ornstein–Uhlenbeck (`Z = -λx`) or given by expressions.
//! - [`SphereModel`]: the round unit sphere `Sⁿ ⊂ ℝⁿ⁺¹`, represented by its
//!   ambient embedding. Points are unit vectors, tangent vectors are ambient
//!   vectors orthogonal to the point, and parallel transport follows
//!   `ṗ = -⟨ẋ, p⟩ x`. The embedded representation avoids chart boundaries
//!   and keeps transport exact up to integrator error.
//!
//! Conventions: `metric(x)` is the chart metric as a bilinear form,
//! `ricci(x)` the Ricci bilinear form, `nabla_drift(x)` the endomorphism
//! `v ↦ ∇_v Z`, and all adjoints are metric adjoints `S* = g⁻¹ Sᵀ g`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{step, FD_REL_STEP};
use crate::linalg::{orthogonal_complement, polar_orthonormalize};

/// An intrinsic description of the manifold and drift, evaluated at chart
/// points (ambient points for embedded models).
pub trait ManifoldModel: Send + Sync {
    fn name(&self) -> &str;

    /// Intrinsic dimension `n`.
    fn dim(&self) -> usize;

    /// Dimension of the point representation (`n` for charts, `n+1` for the
    /// embedded sphere).
    fn state_dim(&self) -> usize {
        self.dim()
    }

    /// Chart metric `g(x)` as a bilinear form.
    fn metric(&self, x: &[f64]) -> DMatrix<f64>;

    /// `Γ(v, u)`, the Christoffel action on a pair of chart vectors.
    fn christoffel_apply(&self, x: &[f64], v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// The full array `Γ^k_{ij}` as one matrix per upper index `k`.
    fn christoffel(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let d = self.state_dim();
        let mut out = alloc::vec![DMatrix::zeros(d, d); d];
        for i in 0..d {
            for j in 0..d {
                let ei = DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 });
                let ej = DVector::from_fn(d, |r, _| if r == j { 1.0 } else { 0.0 });
                let g = self.christoffel_apply(x, &ei, &ej);
                for k in 0..d {
                    out[k][(i, j)] = g[k];
                }
            }
        }
        out
    }

    /// Ricci tensor as a bilinear form (tangent-restricted for embedded
    /// models).
    fn ricci(&self, x: &[f64]) -> DMatrix<f64>;

    /// Drift vector field `Z`.
    fn drift(&self, x: &[f64]) -> DVector<f64>;

    /// Endomorphism `v ↦ ∇_v Z`.
    fn nabla_drift(&self, x: &[f64]) -> DMatrix<f64>;

    /// `div Z` with respect to the model metric.
    fn div_drift(&self, x: &[f64]) -> f64;

    /// Declared lower bound `K` with `Ric_Z ≥ K`; feeds the true-martingale
    /// gate. Global bounds are not computable from pointwise callbacks, so
    /// this is metadata, not a computation.
    fn curvature_lower_bound(&self) -> Option<f64> {
        None
    }

    /// Declared bound `sup |div Z|`.
    fn div_drift_sup(&self) -> Option<f64> {
        None
    }

    /// Declared lower bound on the symmetric part of
    /// `Ric + (∇Z)* - div Z`, used by the analytic Harnack constants.
    fn theta_damping_lower(&self) -> Option<f64> {
        None
    }

    /// A `g`-orthonormal frame at `x`: `state_dim × dim` columns.
    fn initial_frame(&self, x: &[f64]) -> DMatrix<f64>;

    /// Project a candidate point back onto the manifold (identity for chart
    /// models).
    fn retract(&self, x: DVector<f64>) -> DVector<f64> {
        x
    }

    /// Orthogonal projector onto the tangent space at `x` (identity for
    /// chart models).
    fn tangent_projector(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Outward unit normal for codimension-one embedded models.
    fn unit_normal(&self, _x: &[f64]) -> Option<DVector<f64>> {
        None
    }

    /// Whether `x` is still inside the configured safe region.
    fn in_safe_region(&self, x: &[f64], radius: f64) -> bool {
        let n2: f64 = x.iter().map(|v| v * v).sum();
        Float::sqrt(n2) <= radius
    }

    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        Float::sqrt(d2)
    }

    /// Metric adjoint of `∇Z`: `g⁻¹ (∇Z)ᵀ g`.
    fn nabla_drift_adjoint(&self, x: &[f64]) -> DMatrix<f64> {
        let j = self.nabla_drift(x);
        let g = self.metric(x);
        match g.clone().try_inverse() {
            Some(ginv) => ginv * j.transpose() * g,
            // Ambient representation with g = I never lands here.
            None => j.transpose(),
        }
    }

    /// Ricci as an endomorphism of the tangent space: `g⁻¹ · Ric`.
    fn ricci_endomorphism(&self, x: &[f64]) -> DMatrix<f64> {
        let r = self.ricci(x);
        let g = self.metric(x);
        match g.clone().try_inverse() {
            Some(ginv) => ginv * r,
            None => r,
        }
    }
}

/// Drift specification for the Euclidean model.
#[derive(Clone)]
pub enum Drift {
    None,
    /// `Z(x) = -λ x`.
    Ou { lambda: f64 },
    /// Componentwise expressions with symbolic Jacobian.
    Custom { components: Vec<Expr> },
}

/// ℝⁿ with the global chart, metric `I` and flat connection.
pub struct EuclideanModel {
    dim: usize,
    drift: Drift,
    jacobian: Option<Vec<Vec<Expr>>>,
    curvature_lower_bound: Option<f64>,
    div_drift_sup: Option<f64>,
    theta_damping_lower: Option<f64>,
    corrupt_christoffel: bool,
}

impl EuclideanModel {
    pub fn flat(dim: usize) -> Self {
        EuclideanModel {
            dim,
            drift: Drift::None,
            jacobian: None,
            curvature_lower_bound: Some(0.0),
            div_drift_sup: Some(0.0),
            theta_damping_lower: Some(0.0),
            corrupt_christoffel: false,
        }
    }

    /// Ornstein–Uhlenbeck drift `Z = -λx`: `Ric_Z = λ ≥ λ`,
    /// `|div Z| = nλ`, Θ-generator `(n-1)λ`.
    pub fn ou(dim: usize, lambda: f64) -> Self {
        EuclideanModel {
            dim,
            drift: Drift::Ou { lambda },
            jacobian: None,
            curvature_lower_bound: Some(lambda),
            div_drift_sup: Some(dim as f64 * lambda.abs()),
            theta_damping_lower: Some((dim as f64 - 1.0) * lambda),
            corrupt_christoffel: false,
        }
    }

    /// Drift from expressions in `x1..xn`; bounds stay undeclared until
    /// [`EuclideanModel::with_declared_bounds`] is called.
    pub fn with_custom_drift(dim: usize, components: Vec<Expr>) -> Result<Self> {
        if components.len() != dim {
            return Err(Error::Config(format!(
                "drift needs {dim} components, got {}",
                components.len()
            )));
        }
        for c in &components {
            if c.arity() > dim {
                return Err(Error::Config(format!(
                    "drift component references x{} beyond dimension {dim}",
                    c.arity()
                )));
            }
        }
        let jacobian = components
            .iter()
            .map(|c| (0..dim).map(|j| c.diff(j)).collect())
            .collect();
        Ok(EuclideanModel {
            dim,
            drift: Drift::Custom { components },
            jacobian: Some(jacobian),
            curvature_lower_bound: None,
            div_drift_sup: None,
            theta_damping_lower: None,
            corrupt_christoffel: false,
        })
    }

    pub fn with_declared_bounds(
        mut self,
        curvature_lower_bound: Option<f64>,
        div_drift_sup: Option<f64>,
        theta_damping_lower: Option<f64>,
    ) -> Self {
        self.curvature_lower_bound = curvature_lower_bound;
        self.div_drift_sup = div_drift_sup;
        self.theta_damping_lower = theta_damping_lower;
        self
    }

    /// Negative-control hook for the self-test suite: Christoffel symbols
    /// inconsistent with the flat metric.
    pub fn with_corrupted_christoffel(mut self) -> Self {
        self.corrupt_christoffel = true;
        self
    }
}

impl ManifoldModel for EuclideanModel {
    fn name(&self) -> &str {
        "euclidean"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn christoffel_apply(&self, _x: &[f64], v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        if self.corrupt_christoffel {
            let mut out = DVector::zeros(self.dim);
            out[0] = 0.05 * v.dot(u);
            return out;
        }
        DVector::zeros(self.dim)
    }

    fn ricci(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }

    fn drift(&self, x: &[f64]) -> DVector<f64> {
        match &self.drift {
            Drift::None => DVector::zeros(self.dim),
            Drift::Ou { lambda } => {
                DVector::from_iterator(self.dim, x.iter().map(|&v| -lambda * v))
            }
            Drift::Custom { components } => {
                DVector::from_iterator(self.dim, components.iter().map(|c| c.eval(x)))
            }
        }
    }

    fn nabla_drift(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.drift {
            Drift::None => DMatrix::zeros(self.dim, self.dim),
            Drift::Ou { lambda } => DMatrix::identity(self.dim, self.dim) * -*lambda,
            Drift::Custom { .. } => {
                let jac = self.jacobian.as_ref().unwrap();
                DMatrix::from_fn(self.dim, self.dim, |i, j| jac[i][j].eval(x))
            }
        }
    }

    fn div_drift(&self, x: &[f64]) -> f64 {
        match &self.drift {
            Drift::None => 0.0,
            Drift::Ou { lambda } => -(self.dim as f64) * lambda,
            Drift::Custom { .. } => self.nabla_drift(x).trace(),
        }
    }

    fn curvature_lower_bound(&self) -> Option<f64> {
        self.curvature_lower_bound
    }

    fn div_drift_sup(&self) -> Option<f64> {
        self.div_drift_sup
    }

    fn theta_damping_lower(&self) -> Option<f64> {
        self.theta_damping_lower
    }

    fn initial_frame(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// The round unit sphere `Sⁿ ⊂ ℝⁿ⁺¹`, driftless, in its ambient
/// representation.
pub struct SphereModel {
    dim: usize,
}

impl SphereModel {
    pub fn new(dim: usize) -> Self {
        SphereModel { dim }
    }

    fn projector(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.state_dim();
        let xv = DVector::from_column_slice(x);
        DMatrix::identity(d, d) - &xv * xv.transpose() / xv.norm_squared()
    }
}

impl ManifoldModel for SphereModel {
    fn name(&self) -> &str {
        "sphere"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn state_dim(&self) -> usize {
        self.dim + 1
    }

    fn metric(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim + 1, self.dim + 1)
    }

    /// Ambient form of the transport equation `ṗ = -⟨ẋ, p⟩ x`.
    fn christoffel_apply(&self, x: &[f64], v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let xv = DVector::from_column_slice(x);
        &xv * v.dot(u)
    }

    /// `Ric = (n-1) g` on the tangent space, extended by the tangent
    /// projector in ambient coordinates.
    fn ricci(&self, x: &[f64]) -> DMatrix<f64> {
        self.projector(x) * (self.dim as f64 - 1.0)
    }

    fn drift(&self, _x: &[f64]) -> DVector<f64> {
        DVector::zeros(self.dim + 1)
    }

    fn nabla_drift(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim + 1, self.dim + 1)
    }

    fn div_drift(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn curvature_lower_bound(&self) -> Option<f64> {
        Some(self.dim as f64 - 1.0)
    }

    fn div_drift_sup(&self) -> Option<f64> {
        Some(0.0)
    }

    fn theta_damping_lower(&self) -> Option<f64> {
        Some(self.dim as f64 - 1.0)
    }

    fn initial_frame(&self, x: &[f64]) -> DMatrix<f64> {
        orthogonal_complement(&DVector::from_column_slice(x))
    }

    fn retract(&self, x: DVector<f64>) -> DVector<f64> {
        let n = x.norm();
        x / n
    }

    fn tangent_projector(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.projector(x))
    }

    fn unit_normal(&self, x: &[f64]) -> Option<DVector<f64>> {
        let xv = DVector::from_column_slice(x);
        let n = xv.norm();
        Some(xv / n)
    }

    fn in_safe_region(&self, _x: &[f64], _radius: f64) -> bool {
        true
    }

    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        Float::acos(dot.clamp(-1.0, 1.0))
    }
}

/// Which linear pathwise equation the endomorphism drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeitzenbockVariant {
    /// `Ric + (∇Z)* - (div Z)·I`, the generator of `Θ` in the divergence
    /// formula (equal to `Ric*₋z - div Z` since `Ric_Z = Ric - ⟨∇.Z, ·⟩`).
    ThetaGen,
    /// `Ric - ∇Z`, the `Ric_Z` endomorphism driving `Q` in the backward
    /// Bismut formula.
    QGen,
    Custom,
}

type EndoFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// A matrix-valued field `x ↦ 𝓡(x)` acting on tangent vectors; conjugation
/// by the transport frames happens in the path integrator.
pub struct WeitzenbockEndomorphism<'m> {
    pub variant: WeitzenbockVariant,
    model: &'m dyn ManifoldModel,
    custom: Option<Box<EndoFn>>,
}

impl<'m> WeitzenbockEndomorphism<'m> {
    pub fn custom(model: &'m dyn ManifoldModel, f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        WeitzenbockEndomorphism {
            variant: WeitzenbockVariant::Custom,
            model,
            custom: Some(Box::new(f)),
        }
    }

    /// The endomorphism matrix at `x`, acting on chart/ambient tangent
    /// vectors.
    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.model.state_dim();
        match self.variant {
            WeitzenbockVariant::ThetaGen => {
                let ric = self.model.ricci_endomorphism(x);
                let adj = self.model.nabla_drift_adjoint(x);
                let div = self.model.div_drift(x);
                ric + adj - DMatrix::identity(d, d) * div
            }
            WeitzenbockVariant::QGen => {
                self.model.ricci_endomorphism(x) - self.model.nabla_drift(x)
            }
            WeitzenbockVariant::Custom => (self.custom.as_ref().unwrap())(x),
        }
    }

    /// Conjugation into the orthonormal frame: `Fᵀ g 𝓡 F`, an `n×n` matrix.
    pub fn frame_matrix(&self, x: &[f64], frame: &DMatrix<f64>) -> DMatrix<f64> {
        let g = self.model.metric(x);
        frame.transpose() * g * self.matrix(x) * frame
    }
}

/// Build the endomorphism field for a recognized variant.
pub fn weitzenbock_endomorphism<'m>(
    model: &'m dyn ManifoldModel,
    variant: WeitzenbockVariant,
) -> Result<WeitzenbockEndomorphism<'m>> {
    match variant {
        WeitzenbockVariant::Custom => Err(Error::Config(String::from(
            "custom variant requires an explicit matrix field; use WeitzenbockEndomorphism::custom",
        ))),
        v => Ok(WeitzenbockEndomorphism {
            variant: v,
            model,
            custom: None,
        }),
    }
}

/// Transport a `g`-orthonormal frame along the chart displacement `dx`: one
/// Heun step of `u̇ = -Γ(ẋ) u`, then re-orthonormalization through the polar
/// factor (the closest orthonormal frame, preventing secular drift on long
/// paths). Returns the frame at `retract(x + dx)`.
pub fn parallel_transport_step(
    model: &dyn ManifoldModel,
    x: &[f64],
    dx: &DVector<f64>,
    frame: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if dx.iter().all(|&c| c == 0.0) {
        return Ok(frame.clone());
    }
    let n = model.dim();
    let xv = DVector::from_column_slice(x);
    let x_pred = &xv + dx;
    let mut out = frame.clone();
    let mut predicted = frame.clone();
    for j in 0..n {
        let col = frame.column(j).clone_owned();
        let k1 = -model.christoffel_apply(x, dx, &col);
        let pred_col = &col + &k1;
        predicted.set_column(j, &pred_col);
        let k2 = -model.christoffel_apply(x_pred.as_slice(), dx, &pred_col);
        out.set_column(j, &(&col + (k1 + k2) * 0.5));
    }
    let x_new = model.retract(x_pred);
    if !x_new.iter().all(|c| c.is_finite()) {
        return Err(Error::Numerical(String::from(
            "transport target left the chart domain",
        )));
    }
    if let Some(p) = model.tangent_projector(x_new.as_slice()) {
        out = p * out;
    }
    let g = model.metric(x_new.as_slice());
    polar_orthonormalize(&mut out, &g)?;
    Ok(out)
}

/// One finite-difference cross-check result.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Outcome of [`validate_model`]: one entry per identity checked.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn ok(&self) -> Result<()> {
        for c in &self.checks {
            if !c.passed() {
                return Err(Error::Validation {
                    identity: c.name.clone(),
                    max_rel_error: c.max_rel_error,
                    tolerance: c.tolerance,
                });
            }
        }
        Ok(())
    }

    fn push(&mut self, name: &str, err: f64, tol: f64) {
        self.checks.push(CheckResult {
            name: String::from(name),
            max_rel_error: err,
            tolerance: tol,
        });
    }
}

fn sample_points(model: &dyn ManifoldModel) -> Vec<DVector<f64>> {
    let d = model.state_dim();
    let mut pts = Vec::new();
    for k in 0..5 {
        let mut x = DVector::from_fn(d, |i, _| {
            0.4 * Float::sin(1.0 + k as f64 + 2.3 * i as f64) + if i == 0 { 0.7 } else { 0.0 }
        });
        x = model.retract(x);
        pts.push(x);
    }
    pts
}

/// Run finite-difference cross-checks of the model callbacks at a
/// deterministic grid of sample points (central differences, relative step
/// 1e-5). Identities checked:
///
/// - metric positive definiteness,
/// - metric ↔ Christoffel compatibility (chart models), or transport
///   isometry/tangency (embedded models),
/// - Ricci against finite-difference curvature (coordinate curvature for
///   charts, the Gauss equation via the shape operator for hypersurfaces),
/// - Ricci symmetry,
/// - `div Z = Σ ⟨∇_{v_i} Z, v_i⟩` and the `∇Z` callback against finite
///   differences of `Z`.
pub fn validate_model(model: &dyn ManifoldModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let pts = sample_points(model);
    let d = model.state_dim();
    let embedded = model.unit_normal(pts[0].as_slice()).is_some();

    // Metric SPD.
    let mut min_eig = f64::INFINITY;
    for x in &pts {
        let g = model.metric(x.as_slice());
        let eig = g.symmetric_eigen();
        for &l in eig.eigenvalues.iter() {
            min_eig = min_eig.min(l);
        }
    }
    report.push(
        "metric positive definite",
        if min_eig > 1e-12 { 0.0 } else { 1.0 },
        0.5,
    );

    // Metric compatibility (chart) / transport isometry (embedded).
    if !embedded {
        let mut worst: f64 = 0.0;
        for x in &pts {
            let h = step(x.as_slice(), FD_REL_STEP);
            let gam = model.christoffel(x.as_slice());
            let g0 = model.metric(x.as_slice());
            let scale = g0.amax().max(1.0);
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let dg = (model.metric(xp.as_slice()) - model.metric(xm.as_slice())) / (2.0 * h);
                for i in 0..d {
                    for j in 0..d {
                        let mut rhs = 0.0;
                        for l in 0..d {
                            rhs += gam[l][(k, i)] * g0[(l, j)] + gam[l][(k, j)] * g0[(l, i)];
                        }
                        worst = worst.max((dg[(i, j)] - rhs).abs() / scale);
                    }
                }
            }
        }
        report.push("metric compatibility", worst, 1e-6);
    } else {
        let mut worst: f64 = 0.0;
        for x in &pts {
            let frame = model.initial_frame(x.as_slice());
            let mut dx = DVector::from_fn(d, |i, _| 0.3 * Float::cos(i as f64 + 1.0));
            if let Some(p) = model.tangent_projector(x.as_slice()) {
                dx = p * dx;
            }
            dx *= 1e-3 / dx.norm();
            if let Ok(f2) = parallel_transport_step(model, x.as_slice(), &dx, &frame) {
                let y = model.retract(&DVector::from_column_slice(x.as_slice()) + &dx);
                let gram = f2.transpose() * model.metric(y.as_slice()) * &f2;
                worst = worst.max((gram - DMatrix::<f64>::identity(model.dim(), model.dim())).amax());
                if let Some(n) = model.unit_normal(y.as_slice()) {
                    worst = worst.max((f2.transpose() * n).amax());
                }
            } else {
                worst = 1.0;
            }
        }
        report.push("transport isometry", worst, 1e-6);
    }

    // Ricci consistency.
    let mut worst: f64 = 0.0;
    for x in &pts {
        let ric = model.ricci(x.as_slice());
        let scale = ric.amax().max(1.0);
        let fd = if embedded {
            ricci_from_shape_operator(model, x)
        } else {
            ricci_from_christoffel_fd(model, x)
        };
        worst = worst.max((ric - fd).amax() / scale);
    }
    report.push("ricci consistency", worst, 1e-4);

    // Ricci symmetry.
    let mut worst: f64 = 0.0;
    for x in &pts {
        let ric = model.ricci(x.as_slice());
        worst = worst.max((&ric - ric.transpose()).amax());
    }
    report.push("ricci symmetry", worst, 1e-10);

    // div Z identity and ∇Z cross-check.
    let mut worst_div: f64 = 0.0;
    let mut worst_nabla: f64 = 0.0;
    for x in &pts {
        let frame = model.initial_frame(x.as_slice());
        let g = model.metric(x.as_slice());
        let z0 = model.drift(x.as_slice());
        let h = step(x.as_slice(), FD_REL_STEP);
        let mut div_fd = 0.0;
        let mut nabla_fd = DMatrix::zeros(d, d);
        // ∇_v Z = D_v Z + Γ(v, Z) by finite differences of the drift callback.
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (model.drift(xp.as_slice()) - model.drift(xm.as_slice())) / (2.0 * h);
            let ej = DVector::from_fn(d, |r, _| if r == j { 1.0 } else { 0.0 });
            let corr = model.christoffel_apply(x.as_slice(), &ej, &z0);
            nabla_fd.set_column(j, &(col + corr));
        }
        for i in 0..model.dim() {
            let v = frame.column(i).clone_owned();
            div_fd += (&nabla_fd * &v).dot(&(&g * &v));
        }
        let dv = model.div_drift(x.as_slice());
        worst_div = worst_div.max((dv - div_fd).abs() / (1.0 + dv.abs()));
        let nd = model.nabla_drift(x.as_slice());
        worst_nabla = worst_nabla.max((nd - nabla_fd).amax() / (1.0 + model.drift(x.as_slice()).amax()));
    }
    report.push("divergence identity", worst_div, 1e-5);
    report.push("drift covariant derivative", worst_nabla, 1e-4);

    report
}

/// Coordinate curvature from finite differences of the Christoffel array:
/// `R^l_{ijk} = ∂_i Γ^l_{jk} - ∂_j Γ^l_{ik} + Γ^l_{im}Γ^m_{jk} - Γ^l_{jm}Γ^m_{ik}`,
/// contracted to `Ric_{jk} = R^i_{ijk}`.
fn ricci_from_christoffel_fd(model: &dyn ManifoldModel, x: &DVector<f64>) -> DMatrix<f64> {
    let d = model.state_dim();
    let h = step(x.as_slice(), 1e-4);
    let gam0 = model.christoffel(x.as_slice());
    let mut dgam = Vec::with_capacity(d);
    for i in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let gp = model.christoffel(xp.as_slice());
        let gm = model.christoffel(xm.as_slice());
        let diff: Vec<DMatrix<f64>> = gp
            .iter()
            .zip(gm.iter())
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
        dgam.push(diff);
    }
    let mut ric = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            let mut sum = 0.0;
            for i in 0..d {
                let mut r = dgam[i][i][(j, k)] - dgam[j][i][(i, k)];
                for m in 0..d {
                    r += gam0[i][(i, m)] * gam0[m][(j, k)] - gam0[i][(j, m)] * gam0[m][(i, k)];
                }
                sum += r;
            }
            ric[(j, k)] = sum;
        }
    }
    ric
}

/// Gauss-equation Ricci for a hypersurface of flat space: the shape operator
/// `S = dN` comes from finite differences of the unit normal along tangent
/// directions, then `Ric(w, u) = (tr S)⟨Sw, u⟩ - ⟨Sw, Su⟩`.
fn ricci_from_shape_operator(model: &dyn ManifoldModel, x: &DVector<f64>) -> DMatrix<f64> {
    let d = model.state_dim();
    let n = model.dim();
    let frame = model.initial_frame(x.as_slice());
    let h = step(x.as_slice(), FD_REL_STEP);
    // S in the tangent frame: S_ab = ⟨ d/dt N(x + t v_b), v_a ⟩.
    let mut s = DMatrix::zeros(n, n);
    for b in 0..n {
        let vb = frame.column(b).clone_owned();
        let mut xp = x.clone();
        let mut xm = x.clone();
        for i in 0..d {
            xp[i] += h * vb[i];
            xm[i] -= h * vb[i];
        }
        let dn = (model.unit_normal(xp.as_slice()).unwrap()
            - model.unit_normal(xm.as_slice()).unwrap())
            / (2.0 * h);
        for a in 0..n {
            s[(a, b)] = frame.column(a).dot(&dn);
        }
    }
    let tr = s.trace();
    let ric_frame = &s * tr - &s * &s;
    // Push back to ambient bilinear form: Ric_amb = F ric_frame Fᵀ.
    &frame * ric_frame * frame.transpose()
}
