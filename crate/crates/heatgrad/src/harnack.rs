//! Derivative-estimate constants and shift-Harnack inequality checks.
//!
//! From the divergence formula, `P_t(V(f))` obeys two families of bounds:
//!
//! - a derivative-entropy estimate
//!   `|P_t(V(f))| ≤ δ(P_t(f log f) - P_t f·log P_t f) + α₁(δ,t,V)·P_t f`,
//! - an L² estimate `|P_t(V(f))|² ≤ α₂(t,V)²·P_t f²`,
//!
//! and each integrates along a family of diffeomorphisms `F_s` into a
//! shift-Harnack inequality. The constants inside `α₁`, `α₂` are not given
//! constructively; **empirical** mode realizes them as the exact Monte
//! Carlo moments the Jensen/Cauchy–Schwarz steps bound (`α₂`'s moment is
//! `½(E‖W_t‖²)^{1/2}` for the damped-transport weight `W_t`, `α₁`'s is the
//! log-moment-generating function of `‖W_t‖`, with the additive constant
//! `c` fixed to zero), making the checks sharp; **analytic** mode replaces
//! the moments by Gronwall bounds from the declared curvature/drift
//! metadata, `‖Θ_t Θ_s⁻¹‖ ≤ e^{-K(t-s)}`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::error::{Error, Result};
use crate::estim::{
    covariant_divergence, intrinsic_divergence_weight, ptvf_intrinsic, Diffusion,
    EstimatorConfig, RateGrid, SampleKernel, SampleRunner, SequentialRunner, TerminalFunctionals,
};
use crate::fields::{ScalarField, VectorField};
use crate::geom::intrinsic::{weitzenbock_endomorphism, ManifoldModel, WeitzenbockVariant};
use crate::pathsim::{integrate_damped_transport, simulate_intrinsic_opts, Orientation, PathSeed};
use crate::stats::{mean_se, MCEstimate};

/// 16-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GL16_NODES: [f64; 16] = [
    -0.989_400_934_991_649_9,
    -0.944_575_023_073_232_6,
    -0.865_631_202_387_831_7,
    -0.755_404_408_355_003,
    -0.617_876_244_402_643_7,
    -0.458_016_777_657_227_4,
    -0.281_603_550_779_258_9,
    -0.095_012_509_837_637_44,
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_WEIGHTS: [f64; 16] = [
    0.027_152_459_411_754_095,
    0.062_253_523_938_647_89,
    0.095_158_511_682_492_78,
    0.124_628_971_255_533_87,
    0.149_595_988_816_576_73,
    0.169_156_519_395_002_54,
    0.182_603_415_044_923_59,
    0.189_450_610_455_068_5,
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_59,
    0.169_156_519_395_002_54,
    0.149_595_988_816_576_73,
    0.124_628_971_255_533_87,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_095,
];

type FamilyVecFn = dyn Fn(f64, &[f64]) -> DVector<f64> + Send + Sync;
type FamilyMatFn = dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync;
type FamilySupFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// A `C¹` family of diffeomorphisms `F_s`, `s ∈ [0,1]`, with `F_0 = id`.
#[derive(Clone)]
pub struct DiffeoFamily {
    map: Arc<FamilyVecFn>,
    jacobian: Arc<FamilyMatFn>,
    velocity: Arc<FamilyVecFn>,
    /// Exact sup norms `(|V_s|∞, |div V_s|∞)` when known analytically.
    analytic_sups: Option<Arc<FamilySupFn>>,
}

impl DiffeoFamily {
    pub fn new(
        map: impl Fn(f64, &[f64]) -> DVector<f64> + Send + Sync + 'static,
        jacobian: impl Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        velocity: impl Fn(f64, &[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        DiffeoFamily {
            map: Arc::new(map),
            jacobian: Arc::new(jacobian),
            velocity: Arc::new(velocity),
            analytic_sups: None,
        }
    }

    /// Translation family `F_s(x) = x + s·r·dir`: `V_s = r·dir` constant
    /// with `div V_s = 0`, the sharpest test case.
    pub fn translation(dim: usize, direction: DVector<f64>, r: f64) -> Self {
        let dir = direction.normalize();
        let d2 = dir.clone();
        let d3 = dir.clone();
        let mut fam = DiffeoFamily::new(
            move |s, x| DVector::from_column_slice(x) + &dir * (s * r),
            move |_, x| DMatrix::identity(x.len(), x.len()),
            move |_, _| &d2 * r,
        );
        let _ = d3;
        let _ = dim;
        fam.analytic_sups = Some(Arc::new(move |_| (r.abs(), 0.0)));
        fam
    }

    /// The identity family (`r = 0` shift): both sides of every inequality
    /// coincide up to the additive constants.
    pub fn identity(dim: usize) -> Self {
        Self::translation(dim, DVector::from_element(dim, 1.0), 0.0)
    }

    pub fn apply(&self, s: f64, x: &[f64]) -> DVector<f64> {
        (self.map)(s, x)
    }

    /// `V_s(x) = (DF_s)⁻¹(x)·Ḟ_s(x)`.
    pub fn velocity_field(&self, s: f64) -> Result<VectorField> {
        let jac = self.jacobian.clone();
        let vel = self.velocity.clone();
        let field = VectorField::new(move |x| {
            let j = jac(s, x);
            let v = vel(s, x);
            match j.clone().try_inverse() {
                Some(inv) => inv * v,
                None => DVector::from_element(x.len(), f64::NAN),
            }
        });
        Ok(field)
    }

    pub fn check_identity_at_zero(&self, x: &[f64]) -> Result<()> {
        let fx = self.apply(0.0, x);
        let dev: f64 = fx
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if dev > 1e-12 {
            return Err(Error::Config(alloc::format!(
                "diffeomorphism family must satisfy F(0,·) = id, deviation {dev:e}"
            )));
        }
        Ok(())
    }

    pub fn jacobian_at(&self, s: f64, x: &[f64]) -> DMatrix<f64> {
        (self.jacobian)(s, x)
    }

    fn sups(&self, s: f64, model: &dyn ManifoldModel, probe: &[f64]) -> Result<(f64, f64)> {
        if let Some(f) = &self.analytic_sups {
            return Ok(f(s));
        }
        // Estimate on a small deterministic grid around the probe point.
        let field = self.velocity_field(s)?;
        let mut v_sup = 0.0f64;
        let mut div_sup = 0.0f64;
        let d = probe.len();
        let span = 2.0;
        let n_pts = 5usize;
        let mut point = probe.to_vec();
        let mut idx = alloc::vec![0usize; d];
        loop {
            for (j, &i) in idx.iter().enumerate() {
                point[j] = probe[j] - span + 2.0 * span * i as f64 / (n_pts - 1) as f64;
            }
            let g = model.metric(&point);
            let v = field.eval(&point);
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(String::from(
                    "family Jacobian is singular on the probe region",
                )));
            }
            v_sup = v_sup.max(v.dot(&(&g * &v)).sqrt());
            div_sup = div_sup.max(covariant_divergence(model, &field, &point).abs());
            let mut carry = true;
            for slot in idx.iter_mut() {
                if carry {
                    *slot += 1;
                    if *slot == n_pts {
                        *slot = 0;
                    } else {
                        carry = false;
                    }
                }
            }
            if carry {
                break;
            }
        }
        Ok((v_sup, div_sup))
    }
}

/// Sup norms of the vector field entering the estimates.
#[derive(Debug, Clone, Copy)]
pub struct SupNorms {
    pub v_sup: f64,
    pub div_v_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// Monte Carlo moments of the damped-transport weight: sharp constants.
    Empirical,
    /// Gronwall bounds from declared curvature/drift metadata.
    Analytic,
}

/// Moment data behind `α₁(δ,t,V)` and `α₂(t,V)` at a fixed horizon.
pub struct AlphaConstants {
    pub t: f64,
    pub mode: AlphaMode,
    /// `‖W_t‖` samples (empirical mode).
    w_norm_samples: Vec<f64>,
    /// Bound on `(E‖W_t‖²)^{1/2}` (analytic mode).
    sigma_bar: f64,
}

struct WeightNormKernel<'a> {
    model: &'a dyn ManifoldModel,
    x0: Vec<f64>,
    cfg: EstimatorConfig,
    grid: RateGrid,
}

impl<'a> SampleKernel for WeightNormKernel<'a> {
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
        let g = self.model.metric(path.x_last());
        Ok(alloc::vec![w.dot(&(&g * &w)).sqrt()])
    }
}

/// Build the moment data for the `α` constants at horizon `cfg.horizon`.
pub fn alpha_constants(
    model: &dyn ManifoldModel,
    x0: &[f64],
    mode: AlphaMode,
    cfg: &EstimatorConfig,
) -> Result<AlphaConstants> {
    cfg.validate()?;
    let t = cfg.horizon;
    match mode {
        AlphaMode::Empirical => {
            let rate = cfg.resolved_rate(true, "alpha constants (h(0)=0, h(t)=1)")?;
            let dt = t / cfg.steps as f64;
            let kernel = WeightNormKernel {
                model,
                x0: x0.to_vec(),
                cfg: cfg.clone(),
                grid: RateGrid::new(&rate, cfg.steps, dt),
            };
            let samples = SequentialRunner.collect(&kernel)?;
            Ok(AlphaConstants {
                t,
                mode,
                w_norm_samples: samples.into_iter().map(|v| v[0]).collect(),
                sigma_bar: 0.0,
            })
        }
        AlphaMode::Analytic => {
            let d_bar = model.div_drift_sup().ok_or(Error::Config(String::from(
                "analytic alpha constants need a declared div-drift sup bound",
            )))?;
            let k_low = model.theta_damping_lower().ok_or(Error::Config(String::from(
                "analytic alpha constants need a declared damping lower bound",
            )))?;
            let rate = cfg.resolved_rate(true, "alpha constants (h(0)=0, h(t)=1)")?;
            let n = model.dim() as f64;
            // σ̄² = 2n ∫₀ᵗ (|ḣ| + D̄·h)² e^{-2K(t-s)} ds  (Itô isometry with
            // ‖Θ_t Θ_s⁻¹‖ ≤ e^{-K(t-s)}).
            let grid_n = 2048usize;
            let ds = t / grid_n as f64;
            let mut acc = 0.0;
            for i in 0..=grid_n {
                let s = i as f64 * ds;
                let integrand = {
                    let c = rate.derivative(s.min(t * (1.0 - 1e-12))).abs()
                        + d_bar * rate.value(s);
                    2.0 * n * c * c * (-2.0 * k_low * (t - s)).exp()
                };
                let w = if i == 0 || i == grid_n { 0.5 } else { 1.0 };
                acc += w * integrand * ds;
            }
            Ok(AlphaConstants {
                t,
                mode,
                w_norm_samples: Vec::new(),
                sigma_bar: acc.sqrt(),
            })
        }
    }
}

impl AlphaConstants {
    /// `(E‖W_t‖²)^{1/2}` with its standard error (zero in analytic mode).
    pub fn weight_l2_moment(&self) -> (f64, f64) {
        match self.mode {
            AlphaMode::Analytic => (self.sigma_bar, 0.0),
            AlphaMode::Empirical => {
                let sq: Vec<f64> = self.w_norm_samples.iter().map(|w| w * w).collect();
                let (m2, se2) = mean_se(&sq);
                let root = m2.sqrt();
                (root, if root > 0.0 { 0.5 * se2 / root } else { 0.0 })
            }
        }
    }

    /// `α₂(t,V) = |div V|∞ + ½(E‖W_t‖²)^{1/2}·|V|∞`, with standard error.
    pub fn alpha2(&self, sup: &SupNorms) -> (f64, f64) {
        let (moment, se) = self.weight_l2_moment();
        (
            sup.div_v_sup + 0.5 * moment * sup.v_sup,
            0.5 * se * sup.v_sup,
        )
    }

    /// `α₁(δ,t,V)`: empirical mode evaluates the exact entropy-duality
    /// moment `δ·log E[exp(|V|∞·‖W_t‖/(2δ))]` (the additive constant `c` is
    /// zero by this choice); analytic mode uses the sub-Gaussian bound
    /// `δθσ̄ + δθ²σ̄²/2` at `θ = |V|∞/(2δ)`. Returns `+∞` at `δ = 0` with a
    /// non-trivial field.
    pub fn alpha1(&self, delta: f64, sup: &SupNorms) -> (f64, f64) {
        if sup.v_sup == 0.0 {
            return (sup.div_v_sup, 0.0);
        }
        if delta <= 1e-14 {
            return (f64::INFINITY, 0.0);
        }
        let theta = sup.v_sup / (2.0 * delta);
        match self.mode {
            AlphaMode::Empirical => {
                let exps: Vec<f64> = self
                    .w_norm_samples
                    .iter()
                    .map(|w| (theta * w).exp())
                    .collect();
                let (mgf, se) = mean_se(&exps);
                (
                    sup.div_v_sup + delta * mgf.ln(),
                    delta * se / mgf,
                )
            }
            AlphaMode::Analytic => {
                let s = self.sigma_bar;
                (
                    sup.div_v_sup + delta * (theta * s + 0.5 * theta * theta * s * s),
                    0.0,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    ViolatedWithinNoise,
    Violated,
}

/// Result of one inequality check: both sides with uncertainties and the
/// three-way verdict (`Violated` only when the deficit exceeds three
/// combined standard errors).
#[derive(Debug, Clone)]
pub struct HarnackReport {
    pub label: String,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub slack: f64,
    pub combined_se: f64,
    pub verdict: Verdict,
    /// Quadrature nodes `(s, α-value)` for the integrated inequalities.
    pub nodes: Vec<(f64, f64)>,
}

impl HarnackReport {
    fn assemble(
        label: String,
        lhs: f64,
        lhs_se: f64,
        rhs: f64,
        rhs_se: f64,
        nodes: Vec<(f64, f64)>,
    ) -> Self {
        let combined_se = (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
        let slack = rhs - lhs;
        let verdict = if slack >= 0.0 {
            Verdict::Holds
        } else if lhs - rhs <= 3.0 * combined_se {
            Verdict::ViolatedWithinNoise
        } else {
            Verdict::Violated
        };
        HarnackReport {
            label,
            lhs,
            lhs_se,
            rhs,
            rhs_se,
            slack,
            combined_se,
            verdict,
            nodes,
        }
    }
}

fn require_positive(samples: &[Vec<f64>], which: usize, context: &str) -> Result<()> {
    if samples.iter().any(|s| s[which] <= 0.0) {
        return Err(Error::Config(alloc::format!(
            "domain error: {context} requires a positive f (found a non-positive sample)"
        )));
    }
    Ok(())
}

/// Check `|P_t(V(f))| ≤ δ·Ent + α₁(δ,t,V)·P_t f`.
#[allow(clippy::too_many_arguments)]
pub fn entropy_gradient_check(
    model: &dyn ManifoldModel,
    f: &ScalarField,
    v_field: &VectorField,
    x0: &[f64],
    delta: f64,
    mode: AlphaMode,
    sup: &SupNorms,
    cfg: &EstimatorConfig,
) -> Result<HarnackReport> {
    if delta <= 0.0 {
        return Err(Error::Config(String::from("domain error: need δ > 0")));
    }
    let lhs_est = ptvf_intrinsic(model, f.clone(), v_field.clone(), x0, cfg.clone())?;
    let mut terminal = TerminalFunctionals::new(Diffusion::Intrinsic(model), x0, cfg.clone());
    let fa = f.clone();
    terminal.push(move |y| fa.eval(y));
    let fb = f.clone();
    terminal.push(move |y| {
        let v = fb.eval(y);
        v * v.max(1e-300).ln()
    });
    let raw = SequentialRunner.collect(&terminal)?;
    require_positive(&raw, 0, "the entropy estimate")?;
    let means = MCEstimate::from_samples(2, &raw, cfg.seed);
    let (pf, pf_se) = (means.mean[0], means.std_error[0]);
    let (pflogf, pflogf_se) = (means.mean[1], means.std_error[1]);
    let entropy = pflogf - pf * pf.ln();
    let entropy_se = (pflogf_se * pflogf_se + ((pf.ln() + 1.0) * pf_se).powi(2)).sqrt();

    let alphas = alpha_constants(model, x0, mode, cfg)?;
    let (a1, a1_se) = alphas.alpha1(delta, sup);

    let lhs = lhs_est.value().abs();
    let rhs = delta * entropy + a1 * pf;
    let rhs_se = ((delta * entropy_se).powi(2) + (a1_se * pf).powi(2) + (a1 * pf_se).powi(2))
        .sqrt();
    Ok(HarnackReport::assemble(
        String::from("derivative-entropy estimate"),
        lhs,
        lhs_est.se(),
        rhs,
        rhs_se,
        alloc::vec![(delta, a1)],
    ))
}

/// Check `|P_t(V(f))|² ≤ α₂(t,V)²·P_t f²`.
pub fn l2_gradient_check(
    model: &dyn ManifoldModel,
    f: &ScalarField,
    v_field: &VectorField,
    x0: &[f64],
    mode: AlphaMode,
    sup: &SupNorms,
    cfg: &EstimatorConfig,
) -> Result<HarnackReport> {
    let lhs_est = ptvf_intrinsic(model, f.clone(), v_field.clone(), x0, cfg.clone())?;
    let mut terminal = TerminalFunctionals::new(Diffusion::Intrinsic(model), x0, cfg.clone());
    let fa = f.clone();
    terminal.push(move |y| {
        let v = fa.eval(y);
        v * v
    });
    let raw = SequentialRunner.collect(&terminal)?;
    let means = MCEstimate::from_samples(1, &raw, cfg.seed);
    let (pf2, pf2_se) = (means.mean[0], means.std_error[0]);

    let alphas = alpha_constants(model, x0, mode, cfg)?;
    let (a2, a2_se) = alphas.alpha2(sup);

    let lhs = lhs_est.value() * lhs_est.value();
    let lhs_se = 2.0 * lhs_est.value().abs() * lhs_est.se();
    let rhs = a2 * a2 * pf2;
    let rhs_se = ((2.0 * a2 * a2_se * pf2).powi(2) + (a2 * a2 * pf2_se).powi(2)).sqrt();
    Ok(HarnackReport::assemble(
        String::from("L2 derivative estimate"),
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        alloc::vec![(0.0, a2)],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftForm {
    /// `(P_t f)^p ≤ P_t(f^p∘F₁)·exp(∫₀¹ (p/β)·α₁(β'/β, t, V_s) ds)`.
    Power,
    /// `P_t f ≤ P_t(f∘F₁) + (∫₀¹ α₂(t,V_s) ds)^{1/2}·(P_t f²)^{1/2}`.
    L2,
}

/// Verify a shift-Harnack inequality along a diffeomorphism family.
#[allow(clippy::too_many_arguments)]
pub fn shift_harnack_verify(
    model: &dyn ManifoldModel,
    f: &ScalarField,
    family: &DiffeoFamily,
    x0: &[f64],
    p: f64,
    form: ShiftForm,
    mode: AlphaMode,
    cfg: &EstimatorConfig,
) -> Result<HarnackReport> {
    if p < 1.0 {
        return Err(Error::Config(alloc::format!(
            "domain error: shift-Harnack power form needs p >= 1, got {p}"
        )));
    }
    family.check_identity_at_zero(x0)?;
    // Reject singular family Jacobians outright.
    for &node in &[0.0, 0.5, 1.0] {
        let j = family.jacobian_at(node, x0);
        if j.determinant().abs() < 1e-12 {
            return Err(Error::Config(String::from(
                "domain error: family Jacobian is singular",
            )));
        }
    }

    // Terminal functionals under common random numbers:
    // [f(X), f^p(F₁(X)), f(F₁(X)), f²(X)].
    let fam = family.clone();
    let mut terminal = TerminalFunctionals::new(Diffusion::Intrinsic(model), x0, cfg.clone());
    let fa = f.clone();
    terminal.push(move |y| fa.eval(y));
    let fb = f.clone();
    let fam_b = fam.clone();
    terminal.push(move |y| fb.eval(fam_b.apply(1.0, y).as_slice()).powf(p));
    let fc = f.clone();
    let fam_c = fam.clone();
    terminal.push(move |y| fc.eval(fam_c.apply(1.0, y).as_slice()));
    let fd = f.clone();
    terminal.push(move |y| {
        let v = fd.eval(y);
        v * v
    });
    let raw = SequentialRunner.collect(&terminal)?;
    require_positive(&raw, 0, "the shift-Harnack inequality")?;
    let means = MCEstimate::from_samples(4, &raw, cfg.seed);
    let (pf, pf_se) = (means.mean[0], means.std_error[0]);
    let (pfp_shift, pfp_shift_se) = (means.mean[1], means.std_error[1]);
    let (pf_shift, pf_shift_se) = (means.mean[2], means.std_error[2]);
    let (pf2, pf2_se) = (means.mean[3], means.std_error[3]);

    // α constants at the quadrature nodes, all reusing one weight-moment
    // run (common random numbers across nodes).
    let alphas = alpha_constants(model, x0, mode, cfg)?;
    let mut nodes = Vec::with_capacity(16);

    match form {
        ShiftForm::Power => {
            let mut exponent = 0.0;
            let mut exponent_var = 0.0;
            for (&xi, &wi) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
                let s = 0.5 * (xi + 1.0);
                let w = 0.5 * wi;
                let beta = 1.0 + (p - 1.0) * s;
                let delta = (p - 1.0) / beta;
                let sup = {
                    let (v_sup, div_sup) = family.sups(s, model, x0)?;
                    SupNorms {
                        v_sup,
                        div_v_sup: div_sup,
                    }
                };
                let (a1, a1_se) = alphas.alpha1(delta, &sup);
                nodes.push((s, a1));
                exponent += w * (p / beta) * a1;
                exponent_var += (w * (p / beta) * a1_se).powi(2);
            }
            let lhs = pf.powf(p);
            let lhs_se = p * pf.powf(p - 1.0) * pf_se;
            let (rhs, rhs_se) = if exponent.is_infinite() {
                (f64::INFINITY, 0.0)
            } else {
                let e = exponent.exp();
                (
                    pfp_shift * e,
                    ((e * pfp_shift_se).powi(2)
                        + (pfp_shift * e * exponent_var.sqrt()).powi(2))
                    .sqrt(),
                )
            };
            Ok(HarnackReport::assemble(
                alloc::format!("shift-Harnack power form (p = {p})"),
                lhs,
                lhs_se,
                rhs,
                rhs_se,
                nodes,
            ))
        }
        ShiftForm::L2 => {
            let mut integral = 0.0;
            let mut integral_var = 0.0;
            for (&xi, &wi) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
                let s = 0.5 * (xi + 1.0);
                let w = 0.5 * wi;
                let sup = {
                    let (v_sup, div_sup) = family.sups(s, model, x0)?;
                    SupNorms {
                        v_sup,
                        div_v_sup: div_sup,
                    }
                };
                let (a2, a2_se) = alphas.alpha2(&sup);
                nodes.push((s, a2));
                integral += w * a2;
                integral_var += (w * a2_se).powi(2);
            }
            let lhs = pf;
            let lhs_se = pf_se;
            let root = integral.max(0.0).sqrt();
            let root_se = if root > 0.0 {
                0.5 * integral_var.sqrt() / root
            } else {
                0.0
            };
            let pf2_root = pf2.max(0.0).sqrt();
            let pf2_root_se = if pf2_root > 0.0 {
                0.5 * pf2_se / pf2_root
            } else {
                0.0
            };
            let rhs = pf_shift + root * pf2_root;
            let rhs_se = (pf_shift_se.powi(2)
                + (root_se * pf2_root).powi(2)
                + (root * pf2_root_se).powi(2))
            .sqrt();
            Ok(HarnackReport::assemble(
                String::from("shift-Harnack L2 form"),
                lhs,
                lhs_se,
                rhs,
                rhs_se,
                nodes,
            ))
        }
    }
}

/// Convenience for tests and the self-test suite: the moment `½√(E‖W_t‖²)`
/// entering `α₂`, as a Monte Carlo estimate.
pub fn alpha2_moment(
    model: &dyn ManifoldModel,
    x0: &[f64],
    cfg: &EstimatorConfig,
) -> Result<(f64, f64)> {
    let alphas = alpha_constants(model, x0, AlphaMode::Empirical, cfg)?;
    let (m, se) = alphas.weight_l2_moment();
    Ok((0.5 * m, 0.5 * se))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl16_integrates_polynomials_exactly() {
        // Degree-9 polynomial on [0,1].
        let f = |s: f64| 3.0 * s.powi(9) - 2.0 * s.powi(4) + s;
        let mut acc = 0.0;
        for (&x, &w) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
            acc += 0.5 * w * f(0.5 * (x + 1.0));
        }
        let exact = 3.0 / 10.0 - 2.0 / 5.0 + 0.5;
        assert!((acc - exact).abs() < 1e-14);
    }

    #[test]
    fn translation_family_velocity_is_constant() {
        let fam = DiffeoFamily::translation(2, DVector::from_column_slice(&[1.0, 0.0]), 0.5);
        let v = fam.velocity_field(0.3).unwrap();
        let at = v.eval(&[1.0, -2.0]);
        assert!((at[0] - 0.5).abs() < 1e-15);
        assert!(at[1].abs() < 1e-15);
        fam.check_identity_at_zero(&[0.4, 0.2]).unwrap();
    }
}
