//! Path simulation and the linear processes carried along paths.
//!
//! Paths solve Stratonovich equations driven by speed-2 Brownian increments
//! (`dB^i dB^j = 2 δ_ij dt`, so the generator is `Δ + Z`, not `Δ/2`). The
//! integrator is the Heun predictor–corrector, which respects Stratonovich
//! calculus without Lévy-area simulation:
//!
//! - intrinsic mode simulates `(X, U)` on the frame bundle,
//!   `dX = U∘dB + Z dt`, with the frame transported along and
//!   re-orthonormalized through the polar factor each step;
//! - extrinsic mode simulates `dX = A₀ dt + A(X)∘dB`, optionally propagating
//!   the derivative flow `TX` by differentiating the same discrete scheme,
//!   so `TX_k` is the exact tangent of the numerical flow map (including a
//!   retraction when the system has one).
//!
//! The damped transports `Θ`/`Q` and the variation-of-constants process `Ξ`
//! are linear functionals of a recorded path and integrate in a second pass
//! (one RK2 step, resp. one left-rectangle term, per path step).

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geom::extrinsic::ExtrinsicSystem;
use crate::geom::intrinsic::{ManifoldModel, WeitzenbockEndomorphism};
use crate::linalg::{polar_orthonormalize, pseudo_inverse};
use crate::rng;

/// Identifies the random stream a path was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSeed {
    pub master: u64,
    pub stream: u64,
}

/// Simulation options beyond the required arguments.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Paths leaving `‖X‖ > safe_radius` (chart models) are flagged as
    /// exploded; the formulae assume non-explosive diffusions.
    pub safe_radius: f64,
    /// Record a conditioning warning when `‖TX‖` exceeds this bound.
    pub jacobian_bound: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            safe_radius: 1e6,
            jacobian_bound: 1e12,
        }
    }
}

/// One simulated trajectory with everything the weight integrals need.
///
/// Storage is flat and column-major per step; accessors return owned small
/// matrices or slices.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub horizon: f64,
    pub steps: usize,
    pub dt: f64,
    /// Chart/ambient dimension of points.
    pub state_dim: usize,
    /// Number of frame columns (intrinsic dimension) when frames are kept.
    pub frame_cols: usize,
    /// Driving-noise dimension (`n` intrinsic, `m` extrinsic).
    pub noise_dim: usize,
    xs: Vec<f64>,
    increments: Vec<f64>,
    frames: Option<Vec<f64>>,
    jacobians: Option<Vec<f64>>,
    pub exploded: Option<usize>,
    pub tx_warning: Option<usize>,
    pub seed: PathSeed,
}

impl PathRecord {
    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.xs[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn x_vec(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.x(k))
    }

    pub fn x_last(&self) -> &[f64] {
        self.x(self.steps)
    }

    /// Gaussian increment over `[t_k, t_{k+1})` in noise coordinates.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    pub fn increment_vec(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.increment(k))
    }

    pub fn frame(&self, k: usize) -> Option<DMatrix<f64>> {
        let fs = self.frames.as_ref()?;
        let len = self.state_dim * self.frame_cols;
        Some(DMatrix::from_column_slice(
            self.state_dim,
            self.frame_cols,
            &fs[k * len..(k + 1) * len],
        ))
    }

    pub fn jacobian(&self, k: usize) -> Option<DMatrix<f64>> {
        let js = self.jacobians.as_ref()?;
        let len = self.state_dim * self.state_dim;
        Some(DMatrix::from_column_slice(
            self.state_dim,
            self.state_dim,
            &js[k * len..(k + 1) * len],
        ))
    }

    pub fn has_frames(&self) -> bool {
        self.frames.is_some()
    }

    pub fn has_jacobians(&self) -> bool {
        self.jacobians.is_some()
    }

    /// Map the exploded flag to the hard error estimators require.
    pub fn require_complete(&self) -> Result<()> {
        match self.exploded {
            Some(step) => Err(Error::Exploded {
                step,
                path: self.seed.stream,
            }),
            None => Ok(()),
        }
    }
}

/// A sequence of `rows×cols` matrices indexed by path step.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeq {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl MatrixSeq {
    fn with_capacity(rows: usize, cols: usize, len: usize) -> Self {
        MatrixSeq {
            rows,
            cols,
            data: Vec::with_capacity(rows * cols * len),
        }
    }

    fn push(&mut self, m: &DMatrix<f64>) {
        self.data.extend_from_slice(m.as_slice());
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.rows * self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mat(&self, k: usize) -> DMatrix<f64> {
        let len = self.rows * self.cols;
        DMatrix::from_column_slice(self.rows, self.cols, &self.data[k * len..(k + 1) * len])
    }

    /// Multiply the `k`-th matrix into a vector without materializing it.
    pub fn mul_vec(&self, k: usize, v: &DVector<f64>, out: &mut DVector<f64>) {
        let len = self.rows * self.cols;
        let block = &self.data[k * len..(k + 1) * len];
        for r in 0..self.rows {
            let mut acc = 0.0;
            for c in 0..self.cols {
                acc += block[c * self.rows + r] * v[c];
            }
            out[r] = acc;
        }
    }
}

/// Simulate the frame-bundle diffusion `dX = U∘dB + Z dt`, `dU` horizontal,
/// from `x0` over `steps` Heun steps on `[0, horizon]`.
pub fn simulate_intrinsic(
    model: &dyn ManifoldModel,
    x0: &[f64],
    horizon: f64,
    steps: usize,
    seed: PathSeed,
) -> Result<PathRecord> {
    simulate_intrinsic_opts(model, x0, horizon, steps, seed, &SimOptions::default())
}

pub fn simulate_intrinsic_opts(
    model: &dyn ManifoldModel,
    x0: &[f64],
    horizon: f64,
    steps: usize,
    seed: PathSeed,
    opts: &SimOptions,
) -> Result<PathRecord> {
    if steps == 0 || horizon <= 0.0 {
        return Err(Error::Config(alloc::format!(
            "need steps >= 1 and horizon > 0, got {steps} and {horizon}"
        )));
    }
    let d = model.state_dim();
    let n = model.dim();
    if x0.len() != d {
        return Err(Error::Config(alloc::format!(
            "start point has {} coordinates, model needs {d}",
            x0.len()
        )));
    }
    let dt = horizon / steps as f64;
    let mut rng = rng::path_rng(seed.master, seed.stream);

    let mut xs = Vec::with_capacity((steps + 1) * d);
    let mut increments = Vec::with_capacity(steps * n);
    let mut frames = Vec::with_capacity((steps + 1) * d * n);

    let mut x = model.retract(DVector::from_column_slice(x0));
    let mut frame = model.initial_frame(x.as_slice());
    // Flat-transport shortcut: Γ ≡ 0 keeps the frame constant.
    let flat = is_flat_transport(model, x.as_slice());
    xs.extend_from_slice(x.as_slice());
    frames.extend_from_slice(frame.as_slice());

    let mut b = alloc::vec![0.0f64; n];
    let mut exploded = None;

    for k in 0..steps {
        rng::fill_gaussian(&mut rng, 2.0 * dt, &mut b);
        increments.extend_from_slice(&b);
        if exploded.is_some() {
            xs.extend_from_slice(x.as_slice());
            frames.extend_from_slice(frame.as_slice());
            continue;
        }
        let bv = DVector::from_column_slice(&b);

        // Predictor displacement at the left endpoint.
        let z = model.drift(x.as_slice());
        let mut disp = &frame * &bv;
        disp.axpy(dt, &z, 1.0);
        let x_pred = &x + &disp;

        if flat {
            let z_pred = model.drift(x_pred.as_slice());
            let mut corr = &frame * &bv;
            corr += (&z + &z_pred) * (0.5 * dt);
            x += corr;
        } else {
            // Predictor frame (horizontal lift of the predictor displacement).
            let mut frame_pred = frame.clone();
            for j in 0..n {
                let col = frame.column(j).clone_owned();
                let dcol = -model.christoffel_apply(x.as_slice(), &disp, &col);
                frame_pred.set_column(j, &(col + dcol));
            }
            // Corrector: average the joint increment field at the two states.
            let z_pred = model.drift(x_pred.as_slice());
            let mut disp_pred = &frame_pred * &bv;
            disp_pred.axpy(dt, &z_pred, 1.0);
            let disp_corr = (&disp + &disp_pred) * 0.5;
            let mut new_frame = frame.clone();
            for j in 0..n {
                let col = frame.column(j).clone_owned();
                let k1 = -model.christoffel_apply(x.as_slice(), &disp, &col);
                let pred_col = frame_pred.column(j).clone_owned();
                let k2 = -model.christoffel_apply(x_pred.as_slice(), &disp_pred, &pred_col);
                new_frame.set_column(j, &(col + (k1 + k2) * 0.5));
            }
            x = model.retract(&x + &disp_corr);
            if let Some(p) = model.tangent_projector(x.as_slice()) {
                new_frame = p * new_frame;
            }
            polar_orthonormalize(&mut new_frame, &model.metric(x.as_slice()))?;
            frame = new_frame;
        }

        if !model.in_safe_region(x.as_slice(), opts.safe_radius)
            || x.iter().any(|c| !c.is_finite())
        {
            exploded = Some(k);
        }
        xs.extend_from_slice(x.as_slice());
        frames.extend_from_slice(frame.as_slice());
    }

    Ok(PathRecord {
        horizon,
        steps,
        dt,
        state_dim: d,
        frame_cols: n,
        noise_dim: n,
        xs,
        increments,
        frames: Some(frames),
        jacobians: None,
        exploded,
        tx_warning: None,
        seed,
    })
}

fn is_flat_transport(model: &dyn ManifoldModel, x: &[f64]) -> bool {
    if model.state_dim() != model.dim() {
        return false;
    }
    let d = model.state_dim();
    let ones = DVector::from_element(d, 1.0);
    model.christoffel_apply(x, &ones, &ones).amax() == 0.0
        && model.christoffel_apply(&alloc::vec![0.37; d], &ones, &ones).amax() == 0.0
}

/// Which side the conjugated endomorphism multiplies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `dM/dt = -𝓡_{//} M` (the `Θ` convention).
    Right,
    /// `dM/dt = -M 𝓡_{//}` (the `Q` convention; `Q` and the right-driven
    /// solution for the transposed generator are each other's transposes).
    Left,
}

/// Integrate the damped-transport equation along a recorded intrinsic path:
/// one RK2 step per path step with the frame-conjugated endomorphism
/// `C_k = U_kᵀ g 𝓡(X_k) U_k`. Returns the matrices `M_k` and their inverses
/// `M_k⁻¹` (integrated alongside as `dK/dt = +K C`, resp. `+C K`).
pub fn integrate_damped_transport(
    path: &PathRecord,
    endo: &WeitzenbockEndomorphism<'_>,
    orientation: Orientation,
) -> Result<(MatrixSeq, MatrixSeq)> {
    if !path.has_frames() {
        return Err(Error::Config(
            "damped transport needs an intrinsically simulated path with frames".into(),
        ));
    }
    let n = path.frame_cols;
    let dt = path.dt;
    let mut seq = MatrixSeq::with_capacity(n, n, path.steps + 1);
    let mut inv_seq = MatrixSeq::with_capacity(n, n, path.steps + 1);
    let mut m = DMatrix::identity(n, n);
    let mut inv = DMatrix::identity(n, n);
    seq.push(&m);
    inv_seq.push(&inv);
    let mut c_left = endo.frame_matrix(path.x(0), &path.frame(0).unwrap());
    for k in 0..path.steps {
        let c_right = endo.frame_matrix(path.x(k + 1), &path.frame(k + 1).unwrap());
        match orientation {
            Orientation::Right => {
                let k1 = -&c_left * &m;
                let k2 = -&c_right * (&m + &k1 * dt);
                m += (k1 + k2) * (0.5 * dt);
                let k1 = &inv * &c_left;
                let k2 = (&inv + &k1 * dt) * &c_right;
                inv += (k1 + k2) * (0.5 * dt);
            }
            Orientation::Left => {
                let k1 = -&m * &c_left;
                let k2 = -(&m + &k1 * dt) * &c_right;
                m += (k1 + k2) * (0.5 * dt);
                let k1 = &c_left * &inv;
                let k2 = &c_right * (&inv + &k1 * dt);
                inv += (k1 + k2) * (0.5 * dt);
            }
        }
        seq.push(&m);
        inv_seq.push(&inv);
        c_left = c_right;
    }
    Ok((seq, inv_seq))
}

/// Simulate `dX = A₀ dt + A(X)∘dB` with Heun steps; when `with_jacobian` is
/// set, propagate `TX_k` as the exact derivative of the discrete flow map.
pub fn simulate_extrinsic(
    sys: &ExtrinsicSystem,
    x0: &[f64],
    horizon: f64,
    steps: usize,
    seed: PathSeed,
    with_jacobian: bool,
) -> Result<PathRecord> {
    simulate_extrinsic_opts(
        sys,
        x0,
        horizon,
        steps,
        seed,
        with_jacobian,
        &SimOptions::default(),
    )
}

pub fn simulate_extrinsic_opts(
    sys: &ExtrinsicSystem,
    x0: &[f64],
    horizon: f64,
    steps: usize,
    seed: PathSeed,
    with_jacobian: bool,
    opts: &SimOptions,
) -> Result<PathRecord> {
    if steps == 0 || horizon <= 0.0 {
        return Err(Error::Config(alloc::format!(
            "need steps >= 1 and horizon > 0, got {steps} and {horizon}"
        )));
    }
    let d = sys.state_dim();
    let m_noise = sys.noise_dim();
    if x0.len() != d {
        return Err(Error::Config(alloc::format!(
            "start point has {} coordinates, system needs {d}",
            x0.len()
        )));
    }
    let dt = horizon / steps as f64;
    let mut rng = rng::path_rng(seed.master, seed.stream);

    let mut xs = Vec::with_capacity((steps + 1) * d);
    let mut increments = Vec::with_capacity(steps * m_noise);
    let mut jacobians = if with_jacobian {
        Some(Vec::with_capacity((steps + 1) * d * d))
    } else {
        None
    };

    let mut x = sys.retract(DVector::from_column_slice(x0));
    xs.extend_from_slice(x.as_slice());
    let mut tx = DMatrix::identity(d, d);
    if with_jacobian {
        // In embedded representations TX acts on the tangent space; start
        // from the tangent projector so normal directions stay annihilated.
        if sys.is_embedded() {
            let a = sys.a(x.as_slice());
            let met = sys.metric_ops(x.as_slice())?;
            tx = &a * a.transpose() * &met.g;
        }
        jacobians
            .as_mut()
            .unwrap()
            .extend_from_slice(tx.as_slice());
    }

    let mut b = alloc::vec![0.0f64; m_noise];
    let mut exploded = None;
    let mut tx_warning = None;

    for k in 0..steps {
        rng::fill_gaussian(&mut rng, 2.0 * dt, &mut b);
        increments.extend_from_slice(&b);
        if exploded.is_some() {
            xs.extend_from_slice(x.as_slice());
            if let Some(js) = jacobians.as_mut() {
                js.extend_from_slice(tx.as_slice());
            }
            continue;
        }
        let bv = DVector::from_column_slice(&b);

        let a_left = sys.a(x.as_slice());
        let a0_left = sys.a0(x.as_slice());
        let mut disp = &a_left * &bv;
        disp.axpy(dt, &a0_left, 1.0);
        let x_pred = &x + &disp;

        let a_pred = sys.a(x_pred.as_slice());
        let a0_pred = sys.a0(x_pred.as_slice());
        let mut corr = (&a_left + &a_pred) * &bv * 0.5;
        corr += (&a0_left + &a0_pred) * (0.5 * dt);
        let x_raw = &x + &corr;
        let x_new = sys.retract(x_raw.clone());

        if with_jacobian {
            // Differentiate the step: x' = x + ½[A₀(x)+A₀(x̃)]dt
            //                             + ½[A(x)+A(x̃)]b,  x̃ = x + A₀dt + A b.
            let noise_jac_left = noise_jacobian(sys, x.as_slice(), &bv);
            let j0_left = sys.da0(x.as_slice());
            let dpred = DMatrix::identity(d, d) + &j0_left * dt + &noise_jac_left;
            let noise_jac_pred = noise_jacobian(sys, x_pred.as_slice(), &bv);
            let j0_pred = sys.da0(x_pred.as_slice());
            let mut dphi = DMatrix::identity(d, d);
            dphi += (&j0_left + &j0_pred * &dpred) * (0.5 * dt);
            dphi += (&noise_jac_left + &noise_jac_pred * &dpred) * 0.5;
            let step_jac = match sys.retraction_jacobian(x_raw.as_slice()) {
                Some(dr) => dr * dphi,
                None => dphi,
            };
            tx = step_jac * &tx;
            if tx.amax() > opts.jacobian_bound && tx_warning.is_none() {
                tx_warning = Some(k);
            }
        }

        x = x_new;
        if x.iter().any(|c| !c.is_finite())
            || (!sys.has_retraction() && {
                let n2: f64 = x.iter().map(|v| v * v).sum();
                n2.sqrt() > opts.safe_radius
            })
        {
            exploded = Some(k);
        }
        xs.extend_from_slice(x.as_slice());
        if let Some(js) = jacobians.as_mut() {
            js.extend_from_slice(tx.as_slice());
        }
    }

    Ok(PathRecord {
        horizon,
        steps,
        dt,
        state_dim: d,
        frame_cols: 0,
        noise_dim: m_noise,
        xs,
        increments,
        frames: None,
        jacobians,
        exploded,
        tx_warning,
        seed,
    })
}

/// `∂/∂x [A(x) b]`: the `d×d` matrix with column `k` equal to `∂_k A · b`.
fn noise_jacobian(sys: &ExtrinsicSystem, x: &[f64], b: &DVector<f64>) -> DMatrix<f64> {
    let d = sys.state_dim();
    let das = sys.da(x);
    let mut out = DMatrix::zeros(d, d);
    for (k, da_k) in das.iter().enumerate() {
        out.set_column(k, &(da_k * b));
    }
    out
}

/// Solve the variation-of-constants relation for `Ξ` on the path grid by
/// forward substitution with left-rectangle quadrature:
///
/// `Ξ_k = TX_k (I - Σ_{j<k} TX_j⁻¹ G(X_j) Ξ_j dt)`
///
/// where `G = ∇̂A₀ + (∇̂A₀)* - trace ∇̂A₀` is the damping that makes
/// `α_{T-t}(Ξ_t)` a local martingale. (The trace term enters with the
/// opposite sign to the other two: it plays the `+div Z` role from the
/// damping of `Θ`, as the flat Ornstein–Uhlenbeck reduction `Ξ = Θ`
/// requires.) When `A₀ ≡ 0` the sum vanishes and `Ξ_k = TX_k` exactly.
pub fn integrate_xi(path: &PathRecord, sys: &ExtrinsicSystem) -> Result<MatrixSeq> {
    if !path.has_jacobians() {
        return Err(Error::Config(
            "xi integration needs a path simulated with_jacobian".into(),
        ));
    }
    let d = path.state_dim;
    let dt = path.dt;
    let mut seq = MatrixSeq::with_capacity(d, d, path.steps + 1);
    let mut xi = path.jacobian(0).unwrap();
    seq.push(&xi);
    let mut acc = DMatrix::<f64>::zeros(d, d);
    let driftless = sys.a0(path.x(0)).amax() == 0.0 && sys.da0(path.x(0)).amax() == 0.0;
    for k in 1..=path.steps {
        let tx_prev = path.jacobian(k - 1).unwrap();
        if !driftless {
            let g = xi_damping(sys, path.x(k - 1))?;
            let tx_inv = invert_tx(sys, &tx_prev)?;
            acc += tx_inv * g * &xi * dt;
        }
        let tx = path.jacobian(k).unwrap();
        xi = &tx - &tx * &acc;
        seq.push(&xi);
    }
    Ok(seq)
}

/// `G(x) = ∇̂A₀ + (∇̂A₀)* - (trace ∇̂A₀)·I` at a path point.
fn xi_damping(sys: &ExtrinsicSystem, x: &[f64]) -> Result<DMatrix<f64>> {
    let d = sys.state_dim();
    // Torsion-free flat representation: ∇̂A₀ is the plain Jacobian.
    if !sys.is_embedded() && sys.name() == "identity" {
        let j = sys.da0(x);
        let tr = j.trace();
        return Ok(&j + j.transpose() - DMatrix::identity(d, d) * tr);
    }
    let nhat = sys.nabla_hat_a0_matrix(x)?;
    let nhat_star = sys.endo_adjoint(x, &nhat)?;
    let tr = sys.trace_nabla_hat_a0(x)?;
    Ok(&nhat + &nhat_star - DMatrix::identity(d, d) * tr)
}

fn invert_tx(sys: &ExtrinsicSystem, tx: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sys.is_embedded() {
        pseudo_inverse(tx, sys.manifold_dim())
    } else {
        tx.clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("derivative flow TX is singular".into()))
    }
}

/// Left-point Itô sum `Σ_k integrand(k)·ΔB_k` over the recorded increments.
/// The integrand must only use step-`k` data (adaptedness).
pub fn ito_integral(
    path: &PathRecord,
    mut integrand: impl FnMut(usize) -> DMatrix<f64>,
) -> DVector<f64> {
    let mut out: Option<DVector<f64>> = None;
    for k in 0..path.steps {
        let m = integrand(k);
        let term = m * path.increment_vec(k);
        match &mut out {
            Some(acc) => *acc += term,
            None => out = Some(term),
        }
    }
    out.unwrap_or_else(|| DVector::zeros(0))
}
