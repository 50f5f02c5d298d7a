//! The divergence formula and the derivative-free `P_T(V(f))` estimators.
//!
//! Intrinsic form:
//!
//! `E[(div V)(X_T)] = ½ E[⟨V(X_T), //_T Θ_T ∫₀ᵀ (ḣ - div Z·h) Θ_t⁻¹ dB_t⟩]`
//!
//! and, through `div(fV) = V(f) + f div V`,
//!
//! `P_T(V(f)) = -E[f(X_T)(div V)(X_T)] + ½ E[f(X_T)⟨V(X_T), … same weight …⟩]`.
//!
//! The extrinsic form replaces `//Θ` by `Ξ`, `div Z` by `trace ∇̂A₀`, adds
//! the `2h·A₀^A dt` integrand and uses `Σ A_i⟨V,A_i⟩` in place of `div V`.
//! In both forms `f` enters only through point evaluations; no derivative
//! of `f` is ever taken, which is the point of the formulae.
//!
//! Before any path is simulated, the divergence-type estimators check the
//! true-martingale gate: the model must declare a lower curvature bound
//! (`Ric_Z ≥ K`, which also rules out explosion) and a `div Z` sup bound.
//! `EstimatorConfig::override_martingale_gate` skips the check.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::geom::extrinsic::ExtrinsicSystem;
use crate::geom::intrinsic::{weitzenbock_endomorphism, ManifoldModel, WeitzenbockVariant};
use crate::pathsim::{
    integrate_damped_transport, integrate_xi, simulate_extrinsic_opts, simulate_intrinsic_opts,
    Orientation, PathSeed,
};
use crate::stats::MCEstimate;

use super::{
    covariant_divergence, extrinsic_divergence_weight, intrinsic_divergence_weight,
    EstimatorConfig, RateGrid, SampleKernel, SequentialRunner,
};

pub(crate) fn check_martingale_gate(model: &dyn ManifoldModel, cfg: &EstimatorConfig) -> Result<()> {
    if cfg.override_martingale_gate {
        return Ok(());
    }
    if model.curvature_lower_bound().is_none() {
        return Err(Error::GateRefused {
            hypothesis: "curvature_lower_bound (Ric_Z bounded below)",
        });
    }
    if model.div_drift_sup().is_none() {
        return Err(Error::GateRefused {
            hypothesis: "div_drift_sup (div Z bounded)",
        });
    }
    Ok(())
}

pub struct DivergenceExpectation<'a> {
    model: &'a dyn ManifoldModel,
    v_field: VectorField,
    x0: Vec<f64>,
    cfg: EstimatorConfig,
    grid: RateGrid,
}

impl<'a> DivergenceExpectation<'a> {
    pub fn new(
        model: &'a dyn ManifoldModel,
        v_field: VectorField,
        x0: &[f64],
        cfg: EstimatorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_martingale_gate(model, &cfg)?;
        let rate = cfg.resolved_rate(true, "divergence formula (h(0)=0, h(T)=1)")?;
        let dt = cfg.horizon / cfg.steps as f64;
        let grid = RateGrid::new(&rate, cfg.steps, dt);
        Ok(DivergenceExpectation {
            model,
            v_field,
            x0: x0.to_vec(),
            cfg,
            grid,
        })
    }
}

impl<'a> SampleKernel for DivergenceExpectation<'a> {
    fn output_dim(&self) -> usize {
        1
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
        let path = simulate_intrinsic_opts(
            self.model,
            &self.x0,
            self.cfg.horizon,
            self.cfg.steps,
            seed,
            &self.cfg.sim_options(),
        )?;
        path.require_complete()?;
        let endo = weitzenbock_endomorphism(self.model, WeitzenbockVariant::ThetaGen)?;
        let (theta, theta_inv) = integrate_damped_transport(&path, &endo, Orientation::Right)?;
        let w = intrinsic_divergence_weight(self.model, &path, &theta, &theta_inv, &self.grid);
        let y = path.x_last();
        let g = self.model.metric(y);
        let val = 0.5 * self.v_field.eval(y).dot(&(&g * &w));
        Ok(alloc::vec![val])
    }
}

/// `E[(div V)(X_T)]` by the divergence formula (no derivative of `V` is
/// evaluated).
pub fn divergence_expectation(
    model: &dyn ManifoldModel,
    v_field: VectorField,
    x0: &[f64],
    cfg: EstimatorConfig,
) -> Result<MCEstimate> {
    let kernel = DivergenceExpectation::new(model, v_field, x0, cfg)?;
    super::run_mean(&kernel, &SequentialRunner)
}

pub struct PtvfIntrinsic<'a> {
    model: &'a dyn ManifoldModel,
    f: ScalarField,
    v_field: VectorField,
    x0: Vec<f64>,
    cfg: EstimatorConfig,
    grid: RateGrid,
}

impl<'a> PtvfIntrinsic<'a> {
    pub fn new(
        model: &'a dyn ManifoldModel,
        f: ScalarField,
        v_field: VectorField,
        x0: &[f64],
        cfg: EstimatorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_martingale_gate(model, &cfg)?;
        let rate = cfg.resolved_rate(true, "P_T(V(f)) formula (h(0)=0, h(T)=1)")?;
        let dt = cfg.horizon / cfg.steps as f64;
        let grid = RateGrid::new(&rate, cfg.steps, dt);
        Ok(PtvfIntrinsic {
            model,
            f,
            v_field,
            x0: x0.to_vec(),
            cfg,
            grid,
        })
    }
}

impl<'a> SampleKernel for PtvfIntrinsic<'a> {
    fn output_dim(&self) -> usize {
        1
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
        let path = simulate_intrinsic_opts(
            self.model,
            &self.x0,
            self.cfg.horizon,
            self.cfg.steps,
            seed,
            &self.cfg.sim_options(),
        )?;
        path.require_complete()?;
        let endo = weitzenbock_endomorphism(self.model, WeitzenbockVariant::ThetaGen)?;
        let (theta, theta_inv) = integrate_damped_transport(&path, &endo, Orientation::Right)?;
        let w = intrinsic_divergence_weight(self.model, &path, &theta, &theta_inv, &self.grid);
        let y = path.x_last();
        let fy = self.f.eval(y);
        let g = self.model.metric(y);
        let div_v = covariant_divergence(self.model, &self.v_field, y);
        let val = -fy * div_v + 0.5 * fy * self.v_field.eval(y).dot(&(&g * &w));
        Ok(alloc::vec![val])
    }
}

/// `P_T(V(f))(x)` with `f` passed as a point-evaluable handle only.
pub fn ptvf_intrinsic(
    model: &dyn ManifoldModel,
    f: ScalarField,
    v_field: VectorField,
    x0: &[f64],
    cfg: EstimatorConfig,
) -> Result<MCEstimate> {
    let kernel = PtvfIntrinsic::new(model, f, v_field, x0, cfg)?;
    super::run_mean(&kernel, &SequentialRunner)
}

pub struct PtvfExtrinsic<'a> {
    sys: &'a ExtrinsicSystem,
    f: ScalarField,
    v_field: VectorField,
    x0: Vec<f64>,
    cfg: EstimatorConfig,
    grid: RateGrid,
}

impl<'a> PtvfExtrinsic<'a> {
    pub fn new(
        sys: &'a ExtrinsicSystem,
        f: ScalarField,
        v_field: VectorField,
        x0: &[f64],
        cfg: EstimatorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let rate = cfg.resolved_rate(true, "extrinsic P_T(V(f)) formula (h(0)=0, h(T)=1)")?;
        let dt = cfg.horizon / cfg.steps as f64;
        let grid = RateGrid::new(&rate, cfg.steps, dt);
        // Fail fast on degenerate starting data.
        sys.metric_ops(x0)?;
        Ok(PtvfExtrinsic {
            sys,
            f,
            v_field,
            x0: x0.to_vec(),
            cfg,
            grid,
        })
    }
}

impl<'a> SampleKernel for PtvfExtrinsic<'a> {
    fn output_dim(&self) -> usize {
        1
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
        let path = simulate_extrinsic_opts(
            self.sys,
            &self.x0,
            self.cfg.horizon,
            self.cfg.steps,
            seed,
            true,
            &self.cfg.sim_options(),
        )?;
        path.require_complete()?;
        let xi = integrate_xi(&path, self.sys)?;
        let w = extrinsic_divergence_weight(self.sys, &path, &xi, &self.grid)?;
        let y = path.x_last();
        let fy = self.f.eval(y);
        let sum_term = self.sys.sum_ai_inner_v_ai(y, &self.v_field)?;
        let inner = self.sys.inner(y, &self.v_field.eval(y), &w)?;
        Ok(alloc::vec![-fy * sum_term + 0.5 * fy * inner])
    }
}

/// Extrinsic `P_T(V(f))` from the derivative flow, with no parallel
/// transport and no curvature evaluation.
pub fn ptvf_extrinsic(
    sys: &ExtrinsicSystem,
    f: ScalarField,
    v_field: VectorField,
    x0: &[f64],
    cfg: EstimatorConfig,
) -> Result<MCEstimate> {
    let kernel = PtvfExtrinsic::new(sys, f, v_field, x0, cfg)?;
    super::run_mean(&kernel, &SequentialRunner)
}
