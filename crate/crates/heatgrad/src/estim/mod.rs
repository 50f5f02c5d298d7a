//! Monte Carlo estimators for the semigroup derivative and divergence
//! formulae.
//!
//! Every estimator is a [`SampleKernel`]: a pure function from a path index
//! to that path's contribution, with all randomness keyed by
//! `(master seed, path index)`. Running a kernel sequentially or fanned out
//! across workers therefore produces identical samples; the reduction is
//! pairwise in index order, so the reported mean does not depend on the
//! worker count. Explosion of any path aborts the whole estimate: the
//! formulae assume non-explosive diffusions and dropping paths would bias
//! the result.

pub mod backward;
pub mod divergence;
pub mod feynman_kac;
pub mod forward;

use alloc::vec::Vec;
use nalgebra::DVector;
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::geom::extrinsic::ExtrinsicSystem;
use crate::geom::intrinsic::ManifoldModel;
use crate::pathsim::{MatrixSeq, PathRecord, SimOptions};
use crate::rate::RateProcess;
pub use crate::stats::MCEstimate;

pub use backward::{bismut_backward_gradient, BackwardGradient};
pub use divergence::{
    divergence_expectation, ptvf_extrinsic, ptvf_intrinsic, DivergenceExpectation, PtvfExtrinsic,
    PtvfIntrinsic,
};
pub use feynman_kac::{feynman_kac_div_check, FeynmanKacCheck, FkReport};
pub use forward::{forward_log_gradient, Conditioning, ForwardLogGradient};

/// Which description of the diffusion an estimator runs on.
#[derive(Clone, Copy)]
pub enum Diffusion<'a> {
    Intrinsic(&'a dyn ManifoldModel),
    Extrinsic(&'a ExtrinsicSystem),
}

/// Common Monte Carlo parameters.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub horizon: f64,
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    /// Rate process `h`; defaults to `h(t) = t/T`.
    pub rate: Option<RateProcess>,
    /// Worker count for the parallel runner (ignored by the sequential one).
    pub workers: usize,
    /// Run divergence-type estimators even when the true-martingale
    /// hypotheses are not declared.
    pub override_martingale_gate: bool,
    pub safe_radius: f64,
    /// Kernel-conditioning bandwidth for the forward gradient; `None` picks
    /// the plug-in rule `1.06·σ̂·samples^{-1/(n+4)}`.
    pub bandwidth: Option<f64>,
    /// Minimum effective sample size for kernel conditioning.
    pub min_effective_samples: f64,
}

impl EstimatorConfig {
    pub fn new(horizon: f64, steps: usize, samples: usize, seed: u64) -> Self {
        EstimatorConfig {
            horizon,
            steps,
            samples,
            seed,
            rate: None,
            workers: 1,
            override_martingale_gate: false,
            safe_radius: 1e6,
            bandwidth: None,
            min_effective_samples: 50.0,
        }
    }

    pub fn with_rate(mut self, rate: RateProcess) -> Self {
        self.rate = Some(rate);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_override_gate(mut self, on: bool) -> Self {
        self.override_martingale_gate = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_bandwidth(mut self, b: f64) -> Self {
        self.bandwidth = Some(b);
        self
    }

    /// The configured rate process, validated against the horizon, with
    /// unit endpoints when `unit_endpoints` is set.
    pub fn resolved_rate(&self, unit_endpoints: bool, context: &str) -> Result<RateProcess> {
        let rate = match &self.rate {
            Some(r) => r.clone(),
            None => RateProcess::linear(self.horizon),
        };
        rate.require_horizon(self.horizon)?;
        if unit_endpoints {
            rate.require_unit_endpoints(context)?;
        }
        Ok(rate)
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            safe_radius: self.safe_radius,
            ..SimOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon <= 0.0 || self.steps == 0 || self.samples == 0 {
            return Err(Error::Config(alloc::format!(
                "need horizon > 0, steps >= 1, samples >= 1; got T={}, steps={}, samples={}",
                self.horizon,
                self.steps,
                self.samples
            )));
        }
        Ok(())
    }
}

/// A Monte Carlo estimator as a pure per-index sampler.
pub trait SampleKernel: Sync {
    /// Number of components in one contribution.
    fn output_dim(&self) -> usize;

    /// Total number of samples to draw.
    fn samples(&self) -> usize;

    /// Master seed (stream `i` belongs to path index `i`).
    fn master_seed(&self) -> u64;

    /// Contribution of path `index`.
    fn sample(&self, index: u64) -> Result<Vec<f64>>;
}

/// Collects raw contributions of a kernel, in index order.
pub trait SampleRunner {
    fn collect(&self, kernel: &dyn SampleKernel) -> Result<Vec<Vec<f64>>>;
}

/// Single-threaded runner available in `no_std` builds.
pub struct SequentialRunner;

impl SampleRunner for SequentialRunner {
    fn collect(&self, kernel: &dyn SampleKernel) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(kernel.samples());
        for i in 0..kernel.samples() {
            out.push(kernel.sample(i as u64)?);
        }
        Ok(out)
    }
}

/// Run a kernel to a plain sample-mean estimate.
pub fn run_mean(kernel: &dyn SampleKernel, runner: &dyn SampleRunner) -> Result<MCEstimate> {
    let contributions = runner.collect(kernel)?;
    Ok(MCEstimate::from_samples(
        kernel.output_dim(),
        &contributions,
        kernel.master_seed(),
    ))
}

/// Per-step samples of the rate process on the simulation grid.
pub(crate) struct RateGrid {
    pub h: Vec<f64>,
    pub hdot: Vec<f64>,
}

impl RateGrid {
    pub fn new(rate: &RateProcess, steps: usize, dt: f64) -> Self {
        let mut h = Vec::with_capacity(steps);
        let mut hdot = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = k as f64 * dt;
            h.push(rate.value(t));
            hdot.push(rate.derivative(t));
        }
        RateGrid { h, hdot }
    }
}

/// The damped-transport weight vector of the divergence formula along an
/// intrinsic path, in chart coordinates at the endpoint:
///
/// `U_T Θ_T Σ_k (ḣ_k - div Z(X_k) h_k) Θ_k⁻¹ ΔB_k`.
pub(crate) fn intrinsic_divergence_weight(
    model: &dyn ManifoldModel,
    path: &PathRecord,
    theta: &MatrixSeq,
    theta_inv: &MatrixSeq,
    grid: &RateGrid,
) -> DVector<f64> {
    let n = path.frame_cols;
    let mut w = DVector::zeros(n);
    let mut term = DVector::zeros(n);
    for k in 0..path.steps {
        let c = grid.hdot[k] - model.div_drift(path.x(k)) * grid.h[k];
        if c == 0.0 {
            continue;
        }
        theta_inv.mul_vec(k, &path.increment_vec(k), &mut term);
        w.axpy(c, &term, 1.0);
    }
    let mut damped = DVector::zeros(n);
    theta.mul_vec(path.steps, &w, &mut damped);
    path.frame(path.steps).unwrap() * damped
}

/// The `Ξ`-based weight vector of the extrinsic divergence formula, in
/// chart coordinates at the endpoint:
///
/// `Ξ_T Σ_k Ξ_k⁻¹ [(ḣ_k - trace ∇̂A₀(X_k) h_k) A(X_k) ΔB_k + 2 h_k A₀^A(X_k) dt]`.
pub(crate) fn extrinsic_divergence_weight(
    sys: &ExtrinsicSystem,
    path: &PathRecord,
    xi: &MatrixSeq,
    grid: &RateGrid,
) -> Result<DVector<f64>> {
    let d = path.state_dim;
    let mut acc = DVector::zeros(d);
    for k in 0..path.steps {
        let x = path.x(k);
        let trace = sys.trace_nabla_hat_a0(x)?;
        let c = grid.hdot[k] - trace * grid.h[k];
        let mut term = sys.a(x) * path.increment_vec(k) * c;
        if grid.h[k] != 0.0 {
            let a0a = sys.a0a_field(x)?;
            term.axpy(2.0 * grid.h[k] * path.dt, &a0a, 1.0);
        }
        let xi_k = xi.mat(k);
        let inv = if sys.is_embedded() {
            crate::linalg::pseudo_inverse(&xi_k, sys.manifold_dim())?
        } else {
            xi_k.try_inverse()
                .ok_or_else(|| Error::Numerical("singular Xi along path".into()))?
        };
        acc += inv * term;
    }
    Ok(xi.mat(path.steps) * acc)
}

/// Covariant divergence of a vector field at a point, from its coordinate
/// Jacobian plus the Christoffel correction, traced over a `g`-orthonormal
/// frame. Used as the finite-difference fallback when no analytic
/// divergence is supplied.
pub fn covariant_divergence(model: &dyn ManifoldModel, field: &VectorField, y: &[f64]) -> f64 {
    if let Some(d) = field.analytic_divergence(y) {
        return d;
    }
    let jac = field.jacobian(y, crate::fields::FD_REL_STEP);
    let v0 = field.eval(y);
    let frame = model.initial_frame(y);
    let g = model.metric(y);
    let mut div = 0.0;
    for i in 0..model.dim() {
        let e = frame.column(i).clone_owned();
        let cov = &jac * &e + model.christoffel_apply(y, &e, &v0);
        div += cov.dot(&(&g * &e));
    }
    div
}

/// Plain terminal functional sampler: contributions
/// `[φ_1(X_T), .., φ_m(X_T)]` for a list of scalar functions. Shared by the
/// Harnack checks and the eigenfunction oracles; all functionals ride the
/// same paths (common random numbers).
pub struct TerminalFunctionals<'a> {
    pub diffusion: Diffusion<'a>,
    pub x0: Vec<f64>,
    pub cfg: EstimatorConfig,
    #[allow(clippy::type_complexity)]
    pub functionals: Vec<alloc::boxed::Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>>,
}

impl<'a> TerminalFunctionals<'a> {
    pub fn new(diffusion: Diffusion<'a>, x0: &[f64], cfg: EstimatorConfig) -> Self {
        TerminalFunctionals {
            diffusion,
            x0: x0.to_vec(),
            cfg,
            functionals: Vec::new(),
        }
    }

    pub fn push(&mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'a) {
        self.functionals.push(alloc::boxed::Box::new(f));
    }
}

impl<'a> SampleKernel for TerminalFunctionals<'a> {
    fn output_dim(&self) -> usize {
        self.functionals.len()
    }

    fn samples(&self) -> usize {
        self.cfg.samples
    }

    fn master_seed(&self) -> u64 {
        self.cfg.seed
    }

    fn sample(&self, index: u64) -> Result<Vec<f64>> {
        let seed = crate::pathsim::PathSeed {
            master: self.cfg.seed,
            stream: index,
        };
        let opts = self.cfg.sim_options();
        let endpoint: Vec<f64> = match self.diffusion {
            Diffusion::Intrinsic(model) => {
                let path = crate::pathsim::simulate_intrinsic_opts(
                    model,
                    &self.x0,
                    self.cfg.horizon,
                    self.cfg.steps,
                    seed,
                    &opts,
                )?;
                path.require_complete()?;
                path.x_last().to_vec()
            }
            Diffusion::Extrinsic(sys) => {
                let path = crate::pathsim::simulate_extrinsic_opts(
                    sys,
                    &self.x0,
                    self.cfg.horizon,
                    self.cfg.steps,
                    seed,
                    false,
                    &opts,
                )?;
                path.require_complete()?;
                path.x_last().to_vec()
            }
        };
        Ok(self
            .functionals
            .iter()
            .map(|f| f(&endpoint))
            .collect())
    }
}
