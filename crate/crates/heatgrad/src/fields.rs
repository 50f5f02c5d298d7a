//! Point-evaluable handles for user-supplied functions, vector fields and
//! 1-forms.
//!
//! The geometry engine is independent of any expression language: operations
//! accept these handles, which wrap closures (or parsed expressions) plus
//! optional analytic derivative data. When derivative data is absent,
//! consumers fall back to central finite differences.
//!
//! `ScalarField` deliberately carries *only* a point evaluation. The
//! derivative-free estimators take `f` through this type, so they cannot
//! touch derivatives of `f` even by accident.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::expr::Expr;

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;
type MatrixFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// A scalar function on the manifold, evaluable at chart points.
#[derive(Clone)]
pub struct ScalarField {
    f: Arc<ScalarFn>,
}

impl ScalarField {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { f: Arc::new(f) }
    }

    pub fn from_expr(e: Expr) -> Self {
        ScalarField::new(move |x| e.eval(x))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// A vector field with optional analytic Jacobian and divergence.
///
/// The Jacobian is the plain coordinate derivative `J[i][j] = ∂V^i/∂x_j`;
/// covariant corrections are applied by the geometry that consumes it. The
/// divergence callback, when present, is the divergence with respect to the
/// model's metric.
#[derive(Clone)]
pub struct VectorField {
    f: Arc<VectorFn>,
    jacobian: Option<Arc<MatrixFn>>,
    divergence: Option<Arc<ScalarFn>>,
}

impl VectorField {
    pub fn new(f: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        VectorField {
            f: Arc::new(f),
            jacobian: None,
            divergence: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        j: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_divergence(mut self, d: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.divergence = Some(Arc::new(d));
        self
    }

    /// Componentwise expressions; the Jacobian comes from symbolic
    /// differentiation.
    pub fn from_exprs(components: Vec<Expr>) -> Self {
        let dim = components.len();
        let jac: Vec<Vec<Expr>> = components
            .iter()
            .map(|c| (0..dim).map(|j| c.diff(j)).collect())
            .collect();
        let comps = components.clone();
        let f = move |x: &[f64]| DVector::from_iterator(dim, comps.iter().map(|c| c.eval(x)));
        let jf = move |x: &[f64]| {
            DMatrix::from_fn(dim, dim, |i, j| jac[i][j].eval(x))
        };
        VectorField::new(f).with_jacobian(jf)
    }

    pub fn constant(v: DVector<f64>) -> Self {
        let dim = v.len();
        let vc = v.clone();
        VectorField::new(move |_| vc.clone())
            .with_jacobian(move |_| DMatrix::zeros(dim, dim))
            .with_divergence(|_| 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        (self.f)(x)
    }

    /// Coordinate Jacobian: analytic when supplied, else central differences
    /// with relative step `h_rel`.
    pub fn jacobian(&self, x: &[f64], h_rel: f64) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let d = x.len();
        let h = step(x, h_rel);
        let mut out = DMatrix::zeros(self.eval(x).len(), d);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for j in 0..d {
            xp[j] += h;
            xm[j] -= h;
            let col = (self.eval(&xp) - self.eval(&xm)) / (2.0 * h);
            out.set_column(j, &col);
            xp[j] = x[j];
            xm[j] = x[j];
        }
        out
    }

    pub fn analytic_divergence(&self, x: &[f64]) -> Option<f64> {
        self.divergence.as_ref().map(|d| d(x))
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }
}

/// A 1-form given by its covector components, with optional analytic
/// divergence (of the metric-dual vector field).
#[derive(Clone)]
pub struct OneForm {
    components: Arc<VectorFn>,
    divergence: Option<Arc<ScalarFn>>,
}

impl OneForm {
    pub fn new(components: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        OneForm {
            components: Arc::new(components),
            divergence: None,
        }
    }

    pub fn with_divergence(mut self, d: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.divergence = Some(Arc::new(d));
        self
    }

    pub fn components(&self, x: &[f64]) -> DVector<f64> {
        (self.components)(x)
    }

    /// Pairing `φ(u)` with a chart vector.
    pub fn apply(&self, x: &[f64], u: &DVector<f64>) -> f64 {
        self.components(x).dot(u)
    }

    pub fn analytic_divergence(&self, x: &[f64]) -> Option<f64> {
        self.divergence.as_ref().map(|d| d(x))
    }
}

/// Finite-difference step: relative step scaled by the point magnitude.
pub fn step(x: &[f64], h_rel: f64) -> f64 {
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    h_rel * (1.0 + num_traits::Float::sqrt(norm2))
}

/// Central-difference directional derivative of a vector-valued map.
pub fn directional_diff(
    f: &dyn Fn(&[f64]) -> DVector<f64>,
    x: &[f64],
    dir: &DVector<f64>,
    h_rel: f64,
) -> DVector<f64> {
    let h = step(x, h_rel);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..x.len() {
        xp[i] += h * dir[i];
        xm[i] -= h * dir[i];
    }
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Default relative finite-difference step (central differences): balances
/// truncation against round-off at double precision.
pub const FD_REL_STEP: f64 = 1e-5;

// Keep `Box` in the public surface for one-off closures.
pub type BoxedScalarFn = Box<ScalarFn>;
