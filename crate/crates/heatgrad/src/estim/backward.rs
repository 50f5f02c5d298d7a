//! Backward Bismut gradient: `(dP_T f)(v)` without differentiating `P_T f`.
//!
//! With `ℓ_t = (1 - h_t)·v` (so `ℓ_0 = v`, `ℓ_T = 0`) the estimator is
//!
//! - intrinsic: `-½ E[ f(X_T) ∫₀ᵀ ⟨Qᵀ_s ℓ̇_s, dB_s⟩ ]` with `Q` driven by
//!   the `Ric_Z` endomorphism,
//! - extrinsic: `-½ E[ f(X_T) ∫₀ᵀ ⟨TX_s ℓ̇_s, A(X_s) dB_s⟩ ]`, the inner
//!   product taken in the induced metric, so each term reduces to
//!   `⟨A*(X_s)(TX_s ℓ̇_s), ΔB_s⟩` in noise coordinates.

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::error::Result;
use crate::fields::ScalarField;
use crate::geom::intrinsic::{weitzenbock_endomorphism, WeitzenbockVariant};
use crate::pathsim::{
    integrate_damped_transport, simulate_extrinsic_opts, simulate_intrinsic_opts, Orientation,
    PathSeed,
};

use super::{Diffusion, EstimatorConfig, RateGrid, SampleKernel, SequentialRunner};
use crate::stats::MCEstimate;

pub struct BackwardGradient<'a> {
    diffusion: Diffusion<'a>,
    f: ScalarField,
    x0: Vec<f64>,
    v: DVector<f64>,
    cfg: EstimatorConfig,
    grid: RateGrid,
}

impl<'a> BackwardGradient<'a> {
    pub fn new(
        diffusion: Diffusion<'a>,
        f: ScalarField,
        x0: &[f64],
        v: DVector<f64>,
        cfg: EstimatorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        // ℓ = (1-h)·v needs h(0) = 0 and h(T) = 1.
        let rate = cfg.resolved_rate(true, "backward gradient (ℓ(0)=v, ℓ(T)=0)")?;
        let dt = cfg.horizon / cfg.steps as f64;
        let grid = RateGrid::new(&rate, cfg.steps, dt);
        Ok(BackwardGradient {
            diffusion,
            f,
            x0: x0.to_vec(),
            v,
            cfg,
            grid,
        })
    }
}

impl<'a> SampleKernel for BackwardGradient<'a> {
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
        let opts = self.cfg.sim_options();
        match self.diffusion {
            Diffusion::Intrinsic(model) => {
                let path = simulate_intrinsic_opts(
                    model,
                    &self.x0,
                    self.cfg.horizon,
                    self.cfg.steps,
                    seed,
                    &opts,
                )?;
                path.require_complete()?;
                let endo = weitzenbock_endomorphism(model, WeitzenbockVariant::QGen)?;
                // Right-driven with the TM-side Ric_Z generator solves the
                // transpose of the T*M equation, i.e. exactly Qᵀ.
                let (q_tr, _) = integrate_damped_transport(&path, &endo, Orientation::Right)?;
                // v in frame coordinates at the start point.
                let frame0 = path.frame(0).unwrap();
                let g0 = model.metric(path.x(0));
                let v_frame = frame0.transpose() * &g0 * &self.v;
                let mut qv = DVector::zeros(path.frame_cols);
                let mut integral = 0.0;
                for k in 0..path.steps {
                    // ℓ̇ = -ḣ·v, and the leading -½ flips the sign.
                    let c = self.grid.hdot[k];
                    if c == 0.0 {
                        continue;
                    }
                    q_tr.mul_vec(k, &v_frame, &mut qv);
                    integral += c * qv.dot(&path.increment_vec(k));
                }
                Ok(alloc::vec![0.5 * self.f.eval(path.x_last()) * integral])
            }
            Diffusion::Extrinsic(sys) => {
                let path = simulate_extrinsic_opts(
                    sys,
                    &self.x0,
                    self.cfg.horizon,
                    self.cfg.steps,
                    seed,
                    true,
                    &opts,
                )?;
                path.require_complete()?;
                let mut integral = 0.0;
                for k in 0..path.steps {
                    let c = self.grid.hdot[k];
                    if c == 0.0 {
                        continue;
                    }
                    let tx_v = path.jacobian(k).unwrap() * &self.v;
                    let pre = sys.a_star(path.x(k), &tx_v)?;
                    integral += c * pre.dot(&path.increment_vec(k));
                }
                Ok(alloc::vec![0.5 * self.f.eval(path.x_last()) * integral])
            }
        }
    }
}

/// `(dP_T f)(v)` at `x` for a point-evaluable `f`.
pub fn bismut_backward_gradient(
    diffusion: Diffusion<'_>,
    f: ScalarField,
    x0: &[f64],
    v: DVector<f64>,
    cfg: EstimatorConfig,
) -> Result<MCEstimate> {
    let kernel = BackwardGradient::new(diffusion, f, x0, v, cfg)?;
    super::run_mean(&kernel, &SequentialRunner)
}
