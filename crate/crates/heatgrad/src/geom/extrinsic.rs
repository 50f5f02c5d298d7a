//! Geometry induced by a bundle map `A: M×ℝᵐ → TM` with drift `A₀`.
//!
//! A non-degenerate `A` induces a Riemannian metric (`g = (AAᵀ)⁻¹` in chart
//! coordinates, equivalently `⟨v,u⟩ = ⟨A*v, A*u⟩` with
//! `A* = (A|_{ker A⊥})⁻¹`), and the Le Jan–Watanabe connection
//! `∇̆_v U = A(x) d(A* U)_x(v)`, the pushforward of the flat ℝᵐ connection.
//! This module computes the objects the extrinsic estimators need: `A*`,
//! the induced metric, `∇̆`, its torsion `T̆(v,u) = A·dA*(v,u)`, the adjoint
//! connection `∇̂ = ∇̆ - T̆`, `trace ∇̂A₀`, the contorsion sum
//! `Σ ∇_{A_i}A_i = -Σ T̆(·,A_i)*(A_i)`, the drift-torsion field `A₀^A`, the
//! codifferential `δ̂φ = -Σ ι_{A_i} L_{A_i} φ` and the Lebesgue density
//! correction `ρ = det g`.
//!
//! Directional derivatives use analytic `dA`/`dA₀` callbacks when supplied
//! (and the system has a full-rank chart representation); otherwise central
//! finite differences with relative step 1e-5. Embedded representations
//! (state dimension above the manifold dimension, e.g. the sphere-projection
//! system on `S² ⊂ ℝ³`) always use the finite-difference route, with the
//! pseudo-inverse taken on the top `n` eigenvalues of `AAᵀ`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{step, OneForm, VectorField, FD_REL_STEP};
use crate::geom::intrinsic::{CheckResult, ValidationReport};
use crate::linalg::sym_pseudo_inverse;

type VecFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;
type MatFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
type MatArrFn = dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync;
type ScalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Metric data at one point: `g` and `g⁻¹` as operators on the tangent
/// space (pseudo-inverses for embedded representations).
pub struct InducedMetric {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub sigma_min: f64,
}

/// A diffusion system `dX = A₀ dt + A(X)∘dB` described by callbacks.
#[derive(Clone)]
pub struct ExtrinsicSystem {
    name: String,
    manifold_dim: usize,
    state_dim: usize,
    noise_dim: usize,
    a: Arc<MatFn>,
    a0: Arc<VecFn>,
    da: Option<Arc<MatArrFn>>,
    da0: Option<Arc<MatFn>>,
    pub surjectivity_tol: f64,
    retraction: Option<Arc<VecFn>>,
    retraction_jacobian: Option<Arc<MatFn>>,
    trace_nabla_hat_a0_override: Option<Arc<ScalFn>>,
    a0a_override: Option<Arc<VecFn>>,
}

impl ExtrinsicSystem {
    pub fn from_parts(
        name: &str,
        manifold_dim: usize,
        state_dim: usize,
        noise_dim: usize,
        a: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        a0: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if noise_dim < manifold_dim || state_dim < manifold_dim {
            return Err(Error::Config(format!(
                "need m >= n and d >= n, got n={manifold_dim}, d={state_dim}, m={noise_dim}"
            )));
        }
        Ok(ExtrinsicSystem {
            name: String::from(name),
            manifold_dim,
            state_dim,
            noise_dim,
            a: Arc::new(a),
            a0: Arc::new(a0),
            da: None,
            da0: None,
            surjectivity_tol: 1e-8,
            retraction: None,
            retraction_jacobian: None,
            trace_nabla_hat_a0_override: None,
            a0a_override: None,
        })
    }

    /// `A = I` on ℝⁿ, driftless. Combine with [`Self::with_drift_exprs`]
    /// for e.g. the Ornstein–Uhlenbeck system.
    pub fn identity(n: usize) -> Self {
        let mut sys = Self::from_parts(
            "identity",
            n,
            n,
            n,
            move |_| DMatrix::identity(n, n),
            move |_| DVector::zeros(n),
        )
        .unwrap();
        sys.da = Some(Arc::new(move |_| alloc::vec![DMatrix::zeros(n, n); n]));
        sys.da0 = Some(Arc::new(move |_| DMatrix::zeros(n, n)));
        // Flat system: ∇̂ is the coordinate derivative and all torsion
        // corrections vanish.
        sys.trace_nabla_hat_a0_override = Some(Arc::new(|_| 0.0));
        sys.a0a_override = Some(Arc::new(move |_| DVector::zeros(n)));
        sys
    }

    /// `A = diag(1, 1 + x1²/4)` on ℝ² (m = 2): a full-rank system with
    /// non-trivial torsion.
    pub fn scaled_diagonal() -> Self {
        let exprs = alloc::vec![
            alloc::vec![Expr::parse("1").unwrap(), Expr::parse("0").unwrap()],
            alloc::vec![
                Expr::parse("0").unwrap(),
                Expr::parse("1 + x1 ^ 2 / 4").unwrap()
            ],
        ];
        Self::from_exprs("scaled-diagonal", 2, exprs, None).unwrap()
    }

    /// The gradient Brownian system of the unit sphere `S² ⊂ ℝ³`:
    /// `A(x) = I - xxᵀ` (tangent projection on the sphere), `A₀ = 0`.
    pub fn sphere_projection() -> Self {
        let d = 3usize;
        let mut sys = Self::from_parts(
            "sphere-projection",
            2,
            d,
            d,
            move |x| {
                let xv = DVector::from_column_slice(x);
                DMatrix::identity(d, d) - &xv * xv.transpose()
            },
            move |_| DVector::zeros(d),
        )
        .unwrap();
        sys.da = Some(Arc::new(move |x| {
            // ∂_k (δ_ij - x_i x_j) = -δ_ik x_j - δ_jk x_i
            (0..d)
                .map(|k| {
                    DMatrix::from_fn(d, d, |i, j| {
                        let mut v = 0.0;
                        if i == k {
                            v -= x[j];
                        }
                        if j == k {
                            v -= x[i];
                        }
                        v
                    })
                })
                .collect()
        }));
        sys.da0 = Some(Arc::new(move |_| DMatrix::zeros(d, d)));
        sys.retraction = Some(Arc::new(|x| {
            let xv = DVector::from_column_slice(x);
            let n = xv.norm();
            xv / n
        }));
        sys.retraction_jacobian = Some(Arc::new(|x| {
            let xv = DVector::from_column_slice(x);
            let n = xv.norm();
            (DMatrix::identity(3, 3) - &xv * xv.transpose() / (n * n)) / n
        }));
        sys.trace_nabla_hat_a0_override = Some(Arc::new(|_| 0.0));
        sys.a0a_override = Some(Arc::new(move |_| DVector::zeros(d)));
        sys
    }

    /// Build from entry expressions `a_exprs[i][j]` for `A` and optional
    /// drift expressions; Jacobians come from symbolic differentiation.
    pub fn from_exprs(
        name: &str,
        manifold_dim: usize,
        a_exprs: Vec<Vec<Expr>>,
        a0_exprs: Option<Vec<Expr>>,
    ) -> Result<Self> {
        let d = a_exprs.len();
        if d == 0 || a_exprs.iter().any(|row| row.len() != a_exprs[0].len()) {
            return Err(Error::Config(String::from(
                "A expressions must form a rectangular matrix",
            )));
        }
        let m = a_exprs[0].len();
        let da_exprs: Vec<Vec<Vec<Expr>>> = (0..d)
            .map(|k| {
                a_exprs
                    .iter()
                    .map(|row| row.iter().map(|e| e.diff(k)).collect())
                    .collect()
            })
            .collect();
        let a_for_eval = a_exprs.clone();
        let mut sys = Self::from_parts(
            name,
            manifold_dim,
            d,
            m,
            move |x| DMatrix::from_fn(d, m, |i, j| a_for_eval[i][j].eval(x)),
            move |_| DVector::zeros(d),
        )?;
        sys.da = Some(Arc::new(move |x| {
            (0..d)
                .map(|k| DMatrix::from_fn(d, m, |i, j| da_exprs[k][i][j].eval(x)))
                .collect()
        }));
        sys.da0 = Some(Arc::new(move |_| DMatrix::zeros(d, d)));
        match a0_exprs {
            Some(v) => sys.with_drift_exprs(v),
            None => Ok(sys),
        }
    }

    pub fn with_drift_exprs(mut self, a0_exprs: Vec<Expr>) -> Result<Self> {
        let d = self.state_dim;
        if a0_exprs.len() != d {
            return Err(Error::Config(format!("A0 needs {d} components")));
        }
        let da0_exprs: Vec<Vec<Expr>> = a0_exprs
            .iter()
            .map(|c| (0..d).map(|k| c.diff(k)).collect())
            .collect();
        let comps = a0_exprs;
        self.a0 = Arc::new(move |x| DVector::from_iterator(d, comps.iter().map(|c| c.eval(x))));
        let da0 = Arc::new(move |x: &[f64]| DMatrix::from_fn(d, d, |i, k| da0_exprs[i][k].eval(x)));
        self.da0 = Some(da0.clone());
        // Flat identity systems keep their fast paths: trace ∇̂A₀ is the
        // plain divergence and A₀^A stays zero (torsion-free). Everything
        // else falls back to the generic machinery.
        if self.name == "identity" {
            self.trace_nabla_hat_a0_override = Some(Arc::new(move |x| da0(x).trace()));
        } else {
            self.trace_nabla_hat_a0_override = None;
            self.a0a_override = None;
        }
        Ok(self)
    }

    pub fn with_drift_field(mut self, a0: VectorField) -> Self {
        let field = a0.clone();
        self.a0 = Arc::new(move |x| field.eval(x));
        self.da0 = if a0.has_analytic_jacobian() {
            let f = a0.clone();
            Some(Arc::new(move |x: &[f64]| f.jacobian(x, FD_REL_STEP)))
        } else {
            None
        };
        self.trace_nabla_hat_a0_override = None;
        self.a0a_override = None;
        self
    }

    pub fn with_surjectivity_tol(mut self, tol: f64) -> Self {
        self.surjectivity_tol = tol;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn manifold_dim(&self) -> usize {
        self.manifold_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn is_embedded(&self) -> bool {
        self.state_dim > self.manifold_dim
    }

    pub fn a(&self, x: &[f64]) -> DMatrix<f64> {
        (self.a)(x)
    }

    pub fn a0(&self, x: &[f64]) -> DVector<f64> {
        (self.a0)(x)
    }

    /// `∂_k A` for each chart direction `k`: analytic or finite differences.
    pub fn da(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        if let Some(da) = &self.da {
            return da(x);
        }
        let h = step(x, FD_REL_STEP);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        (0..self.state_dim)
            .map(|k| {
                xp[k] += h;
                xm[k] -= h;
                let d = (self.a(&xp) - self.a(&xm)) / (2.0 * h);
                xp[k] = x[k];
                xm[k] = x[k];
                d
            })
            .collect()
    }

    /// Jacobian of `A₀`: analytic or finite differences.
    pub fn da0(&self, x: &[f64]) -> DMatrix<f64> {
        if let Some(da0) = &self.da0 {
            return da0(x);
        }
        let h = step(x, FD_REL_STEP);
        let d = self.state_dim;
        let mut out = DMatrix::zeros(d, d);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for k in 0..d {
            xp[k] += h;
            xm[k] -= h;
            out.set_column(k, &((self.a0(&xp) - self.a0(&xm)) / (2.0 * h)));
            xp[k] = x[k];
            xm[k] = x[k];
        }
        out
    }

    pub fn has_analytic_da(&self) -> bool {
        self.da.is_some()
    }

    pub fn retract(&self, x: DVector<f64>) -> DVector<f64> {
        match &self.retraction {
            Some(r) => r(x.as_slice()),
            None => x,
        }
    }

    pub fn retraction_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.retraction_jacobian.as_ref().map(|j| j(x))
    }

    pub fn has_retraction(&self) -> bool {
        self.retraction.is_some()
    }

    /// Induced metric operators at `x`: `g = (AAᵀ)⁻¹` (pseudo-inverse on the
    /// top `n` eigenvalues for embedded systems), `g⁻¹ = AAᵀ`, and the
    /// smallest admitted singular value of `A`.
    pub fn metric_ops(&self, x: &[f64]) -> Result<InducedMetric> {
        let a = self.a(x);
        self.metric_ops_of(&a)
    }

    /// Alias for [`Self::metric_ops`] under the operation's usual name.
    pub fn induced_metric(&self, x: &[f64]) -> Result<InducedMetric> {
        self.metric_ops(x)
    }

    fn metric_ops_of(&self, a: &DMatrix<f64>) -> Result<InducedMetric> {
        let gram = a * a.transpose();
        let (g, sigma_min) = sym_pseudo_inverse(&gram, self.manifold_dim);
        if sigma_min <= self.surjectivity_tol {
            return Err(Error::Degenerate {
                sigma_min,
                tol: self.surjectivity_tol,
            });
        }
        Ok(InducedMetric {
            g,
            ginv: gram,
            sigma_min,
        })
    }

    /// `A(x)* v = Aᵀ (AAᵀ)⁻¹ v`: the minimal-norm preimage, orthogonal to
    /// `ker A(x)`.
    pub fn a_star(&self, x: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.a(x);
        let m = self.metric_ops_of(&a)?;
        Ok(a.transpose() * (&m.g * v))
    }

    /// Inner product of two chart vectors in the induced metric.
    pub fn inner(&self, x: &[f64], v: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let m = self.metric_ops_of(&self.a(x))?;
        Ok(v.dot(&(&m.g * u)))
    }

    /// A `g`-orthonormal tangent basis at `x` (columns), from the top-`n`
    /// eigenpairs of `AAᵀ`: `ε_i = sqrt(λ_i)·w_i`.
    pub fn tangent_onb(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        let gram = {
            let a = self.a(x);
            &a * a.transpose()
        };
        let eig = gram.symmetric_eigen();
        let mut idx: Vec<usize> = (0..self.state_dim).collect();
        idx.sort_by(|&p, &q| {
            eig.eigenvalues[q]
                .partial_cmp(&eig.eigenvalues[p])
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        let mut basis = Vec::with_capacity(self.manifold_dim);
        for &i in idx.iter().take(self.manifold_dim) {
            let lam = eig.eigenvalues[i];
            if lam.max(0.0).sqrt() <= self.surjectivity_tol {
                return Err(Error::Degenerate {
                    sigma_min: lam.max(0.0).sqrt(),
                    tol: self.surjectivity_tol,
                });
            }
            basis.push(eig.eigenvectors.column(i) * lam.sqrt());
        }
        Ok(basis)
    }

    /// `D_v[A*(·) u](x)` for a constant `u`: analytic when `dA` is supplied
    /// and the representation has full rank, else central differences.
    pub fn dastar_const(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if self.da.is_some() && !self.is_embedded() {
            // d(A*) = dAᵀ g + Aᵀ dg with dg = -g (dA Aᵀ + A dAᵀ) g.
            let a = self.a(x);
            let m = self.metric_ops_of(&a)?;
            let das = self.da(x);
            let mut da_v = DMatrix::zeros(self.state_dim, self.noise_dim);
            for k in 0..self.state_dim {
                da_v += &das[k] * v[k];
            }
            let dgram = &da_v * a.transpose() + &a * da_v.transpose();
            let dg = -(&m.g * dgram * &m.g);
            Ok(da_v.transpose() * (&m.g * u) + a.transpose() * (dg * u))
        } else {
            let h = step(x, FD_REL_STEP);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            for i in 0..x.len() {
                xp[i] += h * v[i];
                xm[i] -= h * v[i];
            }
            Ok((self.a_star(&xp, u)? - self.a_star(&xm, u)?) / (2.0 * h))
        }
    }

    /// `D_v[A*(·) U(·)](x)` for a vector field, via the product rule.
    pub fn dastar_field(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        field: &VectorField,
    ) -> Result<DVector<f64>> {
        let u0 = field.eval(x);
        let du = field.jacobian(x, FD_REL_STEP) * v;
        Ok(self.dastar_const(x, v, &u0)? + self.a_star(x, &du)?)
    }

    /// Exterior derivative of the ℝᵐ-valued 1-form `A*`:
    /// `dA*(v, u) = D_v[A* u] - D_u[A* v]` with constant chart extensions.
    pub fn d_astar(&self, x: &[f64], v: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.dastar_const(x, v, u)? - self.dastar_const(x, u, v)?)
    }

    /// Le Jan–Watanabe covariant derivative `∇̆_v U = A(x) D_v[A* U](x)`.
    pub fn ljw_derivative(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        field: &VectorField,
    ) -> Result<DVector<f64>> {
        Ok(self.a(x) * self.dastar_field(x, v, field)?)
    }

    /// Torsion `T̆(v, u) = A(x) dA*(v, u)`.
    pub fn ljw_torsion(&self, x: &[f64], v: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.a(x) * self.d_astar(x, v, u)?)
    }

    /// Adjoint covariant derivative `∇̂_v U = ∇̆_v U - T̆(v, U(x))`.
    pub fn adjoint_derivative(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        field: &VectorField,
    ) -> Result<DVector<f64>> {
        let u0 = field.eval(x);
        Ok(self.ljw_derivative(x, v, field)? - self.ljw_torsion(x, v, &u0)?)
    }

    /// `∇̂_v A₀`.
    pub fn adjoint_nabla_a0(&self, x: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
        let a0 = self.drift_field();
        self.adjoint_derivative(x, v, &a0)
    }

    /// The endomorphism `N̂: v ↦ ∇̂_v A₀` as a matrix on the tangent space
    /// (kills normal directions in embedded representations).
    pub fn nabla_hat_a0_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let basis = self.tangent_onb(x)?;
        let m = self.metric_ops_of(&self.a(x))?;
        let a0 = self.drift_field();
        let mut out = DMatrix::zeros(self.state_dim, self.state_dim);
        for eps in &basis {
            let col = self.adjoint_derivative(x, eps, &a0)?;
            let dual = &m.g * eps;
            out += col * dual.transpose();
        }
        Ok(out)
    }

    /// `trace ∇̂A₀`, which equals `div A₀` in the induced metric.
    pub fn trace_nabla_hat_a0(&self, x: &[f64]) -> Result<f64> {
        if let Some(f) = &self.trace_nabla_hat_a0_override {
            return Ok(f(x));
        }
        let basis = self.tangent_onb(x)?;
        let m = self.metric_ops_of(&self.a(x))?;
        let a0 = self.drift_field();
        let mut tr = 0.0;
        for eps in &basis {
            let col = self.adjoint_derivative(x, eps, &a0)?;
            tr += col.dot(&(&m.g * eps));
        }
        Ok(tr)
    }

    /// Metric adjoint of an endomorphism: `S* = g⁻¹ Sᵀ g` with the induced
    /// operators (tangent-space adjoint for embedded systems).
    pub fn endo_adjoint(&self, x: &[f64], s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = self.metric_ops_of(&self.a(x))?;
        Ok(&m.ginv * s.transpose() * &m.g)
    }

    /// `Σᵢ T̆(·, A_i)*(A_i)`: the negated Levi-Civita contorsion sum.
    pub fn torsion_star_sum(&self, x: &[f64]) -> Result<DVector<f64>> {
        let a = self.a(x);
        let m = self.metric_ops_of(&a)?;
        let basis = self.tangent_onb(x)?;
        let mut total = DVector::zeros(self.state_dim);
        for i in 0..self.noise_dim {
            let ai = a.column(i).clone_owned();
            // E v = T̆(v, A_i) assembled on the tangent basis, then E*·A_i.
            let mut endo = DMatrix::zeros(self.state_dim, self.state_dim);
            for eps in &basis {
                let col = self.ljw_torsion(x, eps, &ai)?;
                let dual = &m.g * eps;
                endo += col * dual.transpose();
            }
            let adj = &m.ginv * endo.transpose() * &m.g;
            total += adj * &ai;
        }
        Ok(total)
    }

    /// `Σᵢ ∇_{A_i} A_i = -Σᵢ T̆(·, A_i)*(A_i)` (Levi-Civita sum over the
    /// system fields).
    pub fn contorsion_sum(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(-self.torsion_star_sum(x)?)
    }

    /// The drift-torsion interaction field
    /// `A₀^A = (∇̂A₀ + (∇̂A₀)*)(w) + [A₀, w]` with `w = Σ T̆(·,A_i)*(A_i)`.
    pub fn a0a_field(&self, x: &[f64]) -> Result<DVector<f64>> {
        if let Some(f) = &self.a0a_override {
            return Ok(f(x));
        }
        let w = self.torsion_star_sum(x)?;
        let nhat = self.nabla_hat_a0_matrix(x)?;
        let nhat_star = self.endo_adjoint(x, &nhat)?;
        let sym = (&nhat + &nhat_star) * &w;
        // [A₀, w] = Dw(A₀) - DA₀(w), with Dw by central differences of the
        // full torsion-sum construction.
        let a0 = self.a0(x);
        let h = step(x, FD_REL_STEP);
        let d = self.state_dim;
        let mut dw = DMatrix::zeros(d, d);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for k in 0..d {
            xp[k] += h;
            xm[k] -= h;
            let col = (self.torsion_star_sum(&xp)? - self.torsion_star_sum(&xm)?) / (2.0 * h);
            dw.set_column(k, &col);
            xp[k] = x[k];
            xm[k] = x[k];
        }
        let bracket = &dw * &a0 - self.da0(x) * &w;
        Ok(sym + bracket)
    }

    /// `δ̂φ = -Σᵢ ι_{A_i} L_{A_i} φ = -Σᵢ D_{A_i}[φ(A_i)]` (the Lie-derivative
    /// sum collapses by the Le Jan–Watanabe property).
    pub fn hat_delta(&self, x: &[f64], phi: &OneForm) -> Result<f64> {
        let a = self.a(x);
        let h = step(x, FD_REL_STEP);
        let mut total = 0.0;
        for i in 0..self.noise_dim {
            let ai = a.column(i).clone_owned();
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            for r in 0..x.len() {
                xp[r] += h * ai[r];
                xm[r] -= h * ai[r];
            }
            let fp = phi.components(&xp).dot(&self.a(&xp).column(i).clone_owned());
            let fm = phi.components(&xm).dot(&self.a(&xm).column(i).clone_owned());
            total -= (fp - fm) / (2.0 * h);
        }
        Ok(total)
    }

    /// `Σᵢ A_i⟨V, A_i⟩(x)`: the first term of the extrinsic `P_T(V(f))`
    /// formula, equal to `-δ̂(V♭)` and to `div V` for gradient systems.
    pub fn sum_ai_inner_v_ai(&self, x: &[f64], v_field: &VectorField) -> Result<f64> {
        let a = self.a(x);
        let h = step(x, FD_REL_STEP);
        let mut total = 0.0;
        for i in 0..self.noise_dim {
            let ai = a.column(i).clone_owned();
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            for r in 0..x.len() {
                xp[r] += h * ai[r];
                xm[r] -= h * ai[r];
            }
            let ip = {
                let ap = self.a(&xp);
                let m = self.metric_ops_of(&ap)?;
                v_field.eval(&xp).dot(&(&m.g * ap.column(i).clone_owned()))
            };
            let im = {
                let am = self.a(&xm);
                let m = self.metric_ops_of(&am)?;
                v_field.eval(&xm).dot(&(&m.g * am.column(i).clone_owned()))
            };
            total += (ip - im) / (2.0 * h);
        }
        Ok(total)
    }

    /// Lebesgue density correction `ρ(y) = det g(y)` (product of the top-`n`
    /// eigenvalues of `g` for embedded representations), so that
    /// `q_T(x,y) = p_T(x,y)·ρ^{1/2}(y)`.
    pub fn density_rho(&self, y: &[f64]) -> Result<f64> {
        let a = self.a(y);
        let gram = &a * a.transpose();
        let eig = gram.symmetric_eigen();
        let mut lams: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        lams.sort_by(|p, q| q.partial_cmp(p).unwrap_or(core::cmp::Ordering::Equal));
        let mut det = 1.0;
        for &lam in lams.iter().take(self.manifold_dim) {
            if lam.max(0.0).sqrt() <= self.surjectivity_tol {
                return Err(Error::Degenerate {
                    sigma_min: lam.max(0.0).sqrt(),
                    tol: self.surjectivity_tol,
                });
            }
            det *= 1.0 / lam;
        }
        Ok(det.abs())
    }

    /// The metric-dual 1-form `V♭` of a vector field.
    pub fn flat(&self, v_field: &VectorField) -> OneForm {
        let sys = self.clone();
        let vf = v_field.clone();
        OneForm::new(move |x| {
            let m = sys
                .metric_ops_of(&sys.a(x))
                .expect("degenerate point in V-flat");
            &m.g * vf.eval(x)
        })
    }

    /// The drift as a `VectorField` handle (with analytic Jacobian when
    /// `dA₀` is available).
    pub fn drift_field(&self) -> VectorField {
        let a0 = self.a0.clone();
        let base = VectorField::new(move |x| a0(x));
        if let Some(da0) = &self.da0 {
            let da0 = da0.clone();
            base.with_jacobian(move |x| da0(x))
        } else {
            base
        }
    }

    /// Project a chart vector onto the tangent space (identity for
    /// full-rank systems).
    pub fn tangent_project(&self, x: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.is_embedded() {
            return Ok(v.clone());
        }
        let a = self.a(x);
        let m = self.metric_ops_of(&a)?;
        Ok(&m.ginv * (&m.g * v))
    }
}

/// Finite-difference cross-checks of an extrinsic system at a deterministic
/// grid: non-degeneracy, analytic `dA` against finite differences, the
/// projector property of `A*A`, and torsion antisymmetry.
pub fn validate_system(sys: &ExtrinsicSystem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let d = sys.state_dim();
    let mut pts: Vec<DVector<f64>> = (0..4)
        .map(|k| {
            DVector::from_fn(d, |i, _| {
                0.35 * Float::sin(0.7 + k as f64 + 1.9 * i as f64) + if i == 0 { 0.8 } else { 0.1 }
            })
        })
        .collect();
    for p in pts.iter_mut() {
        *p = sys.retract(p.clone());
    }

    let mut sigma_worst = f64::INFINITY;
    for x in &pts {
        match sys.metric_ops(x.as_slice()) {
            Ok(m) => sigma_worst = sigma_worst.min(m.sigma_min),
            Err(_) => sigma_worst = 0.0,
        }
    }
    report.checks.push(CheckResult {
        name: String::from("non-degeneracy"),
        max_rel_error: if sigma_worst > sys.surjectivity_tol {
            0.0
        } else {
            1.0
        },
        tolerance: 0.5,
    });

    if sys.has_analytic_da() {
        let mut worst: f64 = 0.0;
        for x in &pts {
            let h = step(x.as_slice(), FD_REL_STEP);
            let analytic = sys.da(x.as_slice());
            let mut xp = x.clone();
            let mut xm = x.clone();
            for k in 0..d {
                xp[k] += h;
                xm[k] -= h;
                let fd = (sys.a(xp.as_slice()) - sys.a(xm.as_slice())) / (2.0 * h);
                let scale = sys.a(x.as_slice()).amax().max(1.0);
                worst = worst.max((&analytic[k] - fd).amax() / scale);
                xp[k] = x[k];
                xm[k] = x[k];
            }
        }
        report.checks.push(CheckResult {
            name: String::from("dA finite-difference consistency"),
            max_rel_error: worst,
            tolerance: 1e-4,
        });
    }

    // A* A is the orthogonal projection onto ker(A)⊥.
    let mut worst: f64 = 0.0;
    for x in &pts {
        if let Ok(m) = sys.metric_ops(x.as_slice()) {
            let a = sys.a(x.as_slice());
            let proj = a.transpose() * &m.g * &a;
            worst = worst.max((&proj * &proj - &proj).amax());
            worst = worst.max((&proj - proj.transpose()).amax());
            let rank: f64 = proj.trace();
            worst = worst.max((rank - sys.manifold_dim() as f64).abs());
        } else {
            worst = 1.0;
        }
    }
    report.checks.push(CheckResult {
        name: String::from("A*A projector"),
        max_rel_error: worst,
        tolerance: 1e-10,
    });

    // Torsion antisymmetry at sampled tangent pairs.
    let tol = if sys.has_analytic_da() && !sys.is_embedded() {
        1e-10
    } else {
        1e-6
    };
    let mut worst: f64 = 0.0;
    for (k, x) in pts.iter().enumerate() {
        let mut v = DVector::from_fn(d, |i, _| Float::cos(k as f64 + i as f64));
        let mut u = DVector::from_fn(d, |i, _| Float::sin(1.3 * k as f64 + 0.7 * i as f64));
        v = match sys.tangent_project(x.as_slice(), &v) {
            Ok(t) => t,
            Err(_) => v,
        };
        u = match sys.tangent_project(x.as_slice(), &u) {
            Ok(t) => t,
            Err(_) => u,
        };
        if let (Ok(tvu), Ok(tuv)) = (
            sys.ljw_torsion(x.as_slice(), &v, &u),
            sys.ljw_torsion(x.as_slice(), &u, &v),
        ) {
            worst = worst.max((tvu + tuv).amax());
        } else {
            worst = 1.0;
        }
    }
    report.checks.push(CheckResult {
        name: String::from("torsion antisymmetry"),
        max_rel_error: worst,
        tolerance: tol,
    });

    report
}
