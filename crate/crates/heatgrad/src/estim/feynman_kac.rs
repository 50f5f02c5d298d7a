//! Numerical check of the Feynman–Kac commutation
//! `div P_t^{(1)} α = P_t^{div Z} (div α)`:
//!
//! - the left side evaluates the 1-form semigroup
//!   `(P_t^{(1)}α)(x) = E[α(//_t Θ_t ·)]` on a spatial stencil around `x`
//!   and takes the finite-difference divergence;
//! - the right side is the Feynman–Kac average
//!   `E[(div α)(X_t) exp(∫₀ᵗ div Z(X_s) ds)]`.
//!
//! Stencil runs share random streams with each other (common random
//! numbers), so each sample contributes one finite-difference value with an
//! honest standard error. The check is implemented for flat-chart models
//! (Euclidean with drift), where the coordinate divergence needs no
//! Christoffel correction.

use alloc::vec::Vec;
use nalgebra::DVector;
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fields::{step, OneForm, FD_REL_STEP};
use crate::geom::intrinsic::{weitzenbock_endomorphism, ManifoldModel, WeitzenbockVariant};
use crate::pathsim::{integrate_damped_transport, simulate_intrinsic_opts, Orientation, PathSeed};
use crate::stats::MCEstimate;

use super::{EstimatorConfig, SampleKernel, SampleRunner, SequentialRunner};

/// Two-sided report of the commutation check.
#[derive(Debug, Clone)]
pub struct FkReport {
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    pub gap: f64,
    pub combined_se: f64,
    pub fd_step: f64,
    /// Set when the Monte Carlo noise on the stencil exceeds the
    /// finite-difference signal itself.
    pub noise_dominated: bool,
}

pub struct FeynmanKacCheck<'a> {
    model: &'a dyn ManifoldModel,
    alpha: OneForm,
    x0: Vec<f64>,
    cfg: EstimatorConfig,
    fd_step: f64,
}

impl<'a> FeynmanKacCheck<'a> {
    pub fn new(
        model: &'a dyn ManifoldModel,
        alpha: OneForm,
        x0: &[f64],
        cfg: EstimatorConfig,
        fd_step: Option<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = model.state_dim();
        let flat = d == model.dim()
            && model
                .christoffel_apply(
                    x0,
                    &DVector::from_element(d, 1.0),
                    &DVector::from_element(d, 1.0),
                )
                .amax()
                == 0.0;
        if !flat {
            return Err(Error::Config(
                "the Feynman-Kac commutation check runs on flat-chart models".into(),
            ));
        }
        Ok(FeynmanKacCheck {
            model,
            alpha,
            x0: x0.to_vec(),
            cfg,
            fd_step: fd_step.unwrap_or_else(|| 2e-2 * step(x0, 1.0)),
        })
    }

    /// Evaluate the covector of `P_t^{(1)}α` at `p` along one path stream:
    /// `Θ_Tᵀ α⃗(X_T)` in the flat chart.
    fn semigroup_covector(&self, p: &[f64], seed: PathSeed) -> Result<DVector<f64>> {
        let path = simulate_intrinsic_opts(
            self.model,
            p,
            self.cfg.horizon,
            self.cfg.steps,
            seed,
            &self.cfg.sim_options(),
        )?;
        path.require_complete()?;
        let endo = weitzenbock_endomorphism(self.model, WeitzenbockVariant::ThetaGen)?;
        let (theta, _) = integrate_damped_transport(&path, &endo, Orientation::Right)?;
        let a_end = self.alpha.components(path.x_last());
        Ok(theta.mat(path.steps).transpose() * a_end)
    }

    fn div_alpha(&self, y: &[f64]) -> f64 {
        if let Some(v) = self.alpha.analytic_divergence(y) {
            return v;
        }
        let h = step(y, FD_REL_STEP);
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        let mut div = 0.0;
        for i in 0..y.len() {
            yp[i] += h;
            ym[i] -= h;
            div += (self.alpha.components(&yp)[i] - self.alpha.components(&ym)[i]) / (2.0 * h);
            yp[i] = y[i];
            ym[i] = y[i];
        }
        div
    }
}

impl<'a> SampleKernel for FeynmanKacCheck<'a> {
    /// `[lhs contribution, rhs contribution]`.
    fn output_dim(&self) -> usize {
        2
    }

    fn samples(&self) -> usize {
        self.cfg.samples
    }

    fn master_seed(&self) -> u64 {
        self.cfg.seed
    }

    fn sample(&self, index: u64) -> Result<Vec<f64>> {
        let seed = PathSeed {
            master: self.cfg.seed,
            stream: index,
        };
        let d = self.model.state_dim();
        let eps = self.fd_step;
        // LHS: finite-difference divergence of the covector field, all
        // stencil points driven by the same increments.
        let mut lhs = 0.0;
        let mut p_plus = self.x0.clone();
        let mut p_minus = self.x0.clone();
        for i in 0..d {
            p_plus[i] += eps;
            p_minus[i] -= eps;
            let cp = self.semigroup_covector(&p_plus, seed)?;
            let cm = self.semigroup_covector(&p_minus, seed)?;
            lhs += (cp[i] - cm[i]) / (2.0 * eps);
            p_plus[i] = self.x0[i];
            p_minus[i] = self.x0[i];
        }
        // RHS: Feynman–Kac weight along the path from x itself.
        let path = simulate_intrinsic_opts(
            self.model,
            &self.x0,
            self.cfg.horizon,
            self.cfg.steps,
            seed,
            &self.cfg.sim_options(),
        )?;
        path.require_complete()?;
        let mut potential = 0.0;
        for k in 0..path.steps {
            // Trapezoid on div Z along the path.
            let a = self.model.div_drift(path.x(k));
            let b = self.model.div_drift(path.x(k + 1));
            potential += 0.5 * (a + b) * path.dt;
        }
        let rhs = self.div_alpha(path.x_last()) * potential.exp();
        Ok(alloc::vec![lhs, rhs])
    }
}

/// Estimate both sides of the commutation identity and report the gap.
pub fn feynman_kac_div_check(
    model: &dyn ManifoldModel,
    alpha: OneForm,
    x0: &[f64],
    cfg: EstimatorConfig,
    fd_step: Option<f64>,
) -> Result<FkReport> {
    let kernel = FeynmanKacCheck::new(model, alpha, x0, cfg, fd_step)?;
    let contributions = SequentialRunner.collect(&kernel)?;
    kernel.report(&contributions)
}

impl<'a> FeynmanKacCheck<'a> {
    pub fn report(&self, contributions: &[Vec<f64>]) -> Result<FkReport> {
        let both = MCEstimate::from_samples(2, contributions, self.cfg.seed);
        let lhs = MCEstimate {
            mean: DVector::from_column_slice(&[both.mean[0]]),
            std_error: DVector::from_column_slice(&[both.std_error[0]]),
            samples: both.samples,
            seed: both.seed,
            aborted_paths: 0,
        };
        let rhs = MCEstimate {
            mean: DVector::from_column_slice(&[both.mean[1]]),
            std_error: DVector::from_column_slice(&[both.std_error[1]]),
            samples: both.samples,
            seed: both.seed,
            aborted_paths: 0,
        };
        let gap = (lhs.value() - rhs.value()).abs();
        let combined_se = (lhs.se() * lhs.se() + rhs.se() * rhs.se()).sqrt();
        let noise_dominated = lhs.se() > lhs.value().abs().max(1e-12);
        Ok(FkReport {
            gap,
            combined_se,
            fd_step: self.fd_step,
            noise_dominated,
            lhs,
            rhs,
        })
    }
}
