//! Execute a configured experiment and collect its result records.

use anyhow::anyhow;
use heatgrad::estim::{
    run_mean, BackwardGradient, Conditioning, Diffusion, DivergenceExpectation, FeynmanKacCheck,
    ForwardLogGradient, PtvfExtrinsic, PtvfIntrinsic, SampleRunner,
};
use heatgrad::harnack::{
    alpha_constants, entropy_gradient_check, l2_gradient_check, shift_harnack_verify, AlphaMode,
    DiffeoFamily, ShiftForm, SupNorms,
};
use heatgrad::MCEstimate;
use heatgrad::nalgebra::DVector;
use std::time::Instant;

use crate::config::{
    build_model, build_one_form, build_scalar_field, build_system, build_vector_field,
    ExperimentConfig,
};
use crate::output::ResultRecord;
use crate::parallel::RayonRunner;

/// Errors keep the core error (for the exit-code contract) when there is
/// one; everything else is a configuration problem.
pub enum RunError {
    Core(heatgrad::Error),
    Other(anyhow::Error),
}

impl From<heatgrad::Error> for RunError {
    fn from(e: heatgrad::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Other(e)
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

pub struct RunOutcome {
    pub records: Vec<ResultRecord>,
    pub runtimes_ms: Vec<u128>,
}

pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    let digest = cfg.digest();
    let est_cfg = cfg.estimator_config()?;
    let runner = RayonRunner::new(est_cfg.workers).map_err(RunError::Other)?;
    let e = &cfg.estimator;
    let name = e.name.as_str();
    let started = Instant::now();

    let record: ResultRecord = match name {
        "divergence_expectation" => {
            let model = build_model(require_model(cfg)?)?;
            let v = build_vector_field(require(&e.v_field, "V")?, e.div_v.as_ref())?;
            let kernel = DivergenceExpectation::new(model.as_ref(), v, &e.x, est_cfg.clone())?;
            let est = run_mean(&kernel, &runner)?;
            ResultRecord::from_estimate(name, &digest, &est)
        }
        "bismut_backward_gradient" => {
            let f = build_scalar_field(require(&e.f, "f")?)?;
            let v = DVector::from_column_slice(require(&e.v, "v")?);
            let est: MCEstimate = if let Some(section) = &cfg.model {
                let model = build_model(section)?;
                let kernel = BackwardGradient::new(
                    Diffusion::Intrinsic(model.as_ref()),
                    f,
                    &e.x,
                    v,
                    est_cfg.clone(),
                )?;
                run_mean(&kernel, &runner)?
            } else {
                let sys = build_system(require_system(cfg)?)?;
                let kernel = BackwardGradient::new(
                    Diffusion::Extrinsic(&sys),
                    f,
                    &e.x,
                    v,
                    est_cfg.clone(),
                )?;
                run_mean(&kernel, &runner)?
            };
            ResultRecord::from_estimate(name, &digest, &est)
        }
        "ptvf_intrinsic" => {
            let model = build_model(require_model(cfg)?)?;
            let f = build_scalar_field(require(&e.f, "f")?)?;
            let v = build_vector_field(require(&e.v_field, "V")?, e.div_v.as_ref())?;
            let kernel = PtvfIntrinsic::new(model.as_ref(), f, v, &e.x, est_cfg.clone())?;
            let est = run_mean(&kernel, &runner)?;
            ResultRecord::from_estimate(name, &digest, &est)
        }
        "ptvf_extrinsic" => {
            let sys = build_system(require_system(cfg)?)?;
            let f = build_scalar_field(require(&e.f, "f")?)?;
            let v = build_vector_field(require(&e.v_field, "V")?, e.div_v.as_ref())?;
            let kernel = PtvfExtrinsic::new(&sys, f, v, &e.x, est_cfg.clone())?;
            let est = run_mean(&kernel, &runner)?;
            ResultRecord::from_estimate(name, &digest, &est)
        }
        "forward_log_gradient" => {
            let target = require(&e.y, "y")?;
            let mode = match e.conditioning.as_deref().unwrap_or("kernel") {
                "exact-bridge" => Conditioning::ExactBridge,
                "kernel" => Conditioning::Kernel,
                other => {
                    return Err(RunError::Other(anyhow!(
                        "unknown conditioning `{other}` (exact-bridge | kernel)"
                    )))
                }
            };
            let est = if let Some(section) = &cfg.model {
                let model = build_model(section)?;
                let kernel = ForwardLogGradient::new(
                    Diffusion::Intrinsic(model.as_ref()),
                    &e.x,
                    target,
                    mode,
                    est_cfg.clone(),
                )?;
                let contributions = runner.collect(&kernel)?;
                kernel.finalize(&contributions)?
            } else {
                let sys = build_system(require_system(cfg)?)?;
                let kernel = ForwardLogGradient::new(
                    Diffusion::Extrinsic(&sys),
                    &e.x,
                    target,
                    mode,
                    est_cfg.clone(),
                )?;
                let contributions = runner.collect(&kernel)?;
                kernel.finalize(&contributions)?
            };
            ResultRecord::from_estimate(name, &digest, &est)
        }
        "feynman_kac_div_check" => {
            let model = build_model(require_model(cfg)?)?;
            let alpha = build_one_form(require(&e.alpha, "alpha")?, e.div_alpha.as_ref())?;
            let kernel =
                FeynmanKacCheck::new(model.as_ref(), alpha, &e.x, est_cfg.clone(), None)?;
            let contributions = runner.collect(&kernel)?;
            let rep = kernel.report(&contributions)?;
            ResultRecord::from_fk(name, &digest, &rep)
        }
        "entropy_gradient_check" | "l2_gradient_check" => {
            let model = build_model(require_model(cfg)?)?;
            let f = build_scalar_field(require(&e.f, "f")?)?;
            let v = build_vector_field(require(&e.v_field, "V")?, e.div_v.as_ref())?;
            let h = cfg
                .harnack
                .as_ref()
                .ok_or_else(|| anyhow!("{name} needs a [harnack] section"))?;
            let sup = sup_norms(h)?;
            let mode = alpha_mode(h)?;
            let rep = if name == "entropy_gradient_check" {
                let delta = h.delta.ok_or_else(|| anyhow!("entropy check needs `delta`"))?;
                entropy_gradient_check(model.as_ref(), &f, &v, &e.x, delta, mode, &sup, &est_cfg)?
            } else {
                l2_gradient_check(model.as_ref(), &f, &v, &e.x, mode, &sup, &est_cfg)?
            };
            ResultRecord::from_harnack(name, &digest, est_cfg.seed, est_cfg.samples, &rep)
        }
        "shift_harnack_verify" => {
            let model = build_model(require_model(cfg)?)?;
            let f = build_scalar_field(require(&e.f, "f")?)?;
            let h = cfg
                .harnack
                .as_ref()
                .ok_or_else(|| anyhow!("shift_harnack_verify needs a [harnack] section"))?;
            let p = h.p.unwrap_or(2.0);
            let form = match h.form.as_deref().unwrap_or("power") {
                "power" => ShiftForm::Power,
                "l2" => ShiftForm::L2,
                other => return Err(RunError::Other(anyhow!("unknown form `{other}`"))),
            };
            let r = h.shift_r.unwrap_or(0.0);
            let dir = match &h.shift_dir {
                Some(d) => DVector::from_column_slice(d),
                None => DVector::from_element(e.x.len(), 1.0),
            };
            let family = if r == 0.0 {
                DiffeoFamily::identity(e.x.len())
            } else {
                DiffeoFamily::translation(e.x.len(), dir, r)
            };
            let mode = alpha_mode(h)?;
            let rep =
                shift_harnack_verify(model.as_ref(), &f, &family, &e.x, p, form, mode, &est_cfg)?;
            ResultRecord::from_harnack(name, &digest, est_cfg.seed, est_cfg.samples, &rep)
        }
        "alpha_constants" => {
            let model = build_model(require_model(cfg)?)?;
            let h = cfg
                .harnack
                .as_ref()
                .ok_or_else(|| anyhow!("alpha_constants needs a [harnack] section"))?;
            let sup = sup_norms(h)?;
            let mode = alpha_mode(h)?;
            let delta = h.delta.unwrap_or(1.0);
            let alphas = alpha_constants(model.as_ref(), &e.x, mode, &est_cfg)?;
            let (a1, a1_se) = alphas.alpha1(delta, &sup);
            let (a2, a2_se) = alphas.alpha2(&sup);
            let est = MCEstimate {
                mean: DVector::from_column_slice(&[a1, a2]),
                std_error: DVector::from_column_slice(&[a1_se, a2_se]),
                samples: est_cfg.samples,
                seed: est_cfg.seed,
                aborted_paths: 0,
            };
            ResultRecord::from_estimate(name, &digest, &est)
        }
        other => {
            return Err(RunError::Other(anyhow!(
                "unknown estimator `{other}`; known: divergence_expectation, \
                 bismut_backward_gradient, ptvf_intrinsic, ptvf_extrinsic, \
                 forward_log_gradient, feynman_kac_div_check, entropy_gradient_check, \
                 l2_gradient_check, shift_harnack_verify, alpha_constants"
            )))
        }
    };

    let elapsed = started.elapsed().as_millis();
    Ok(RunOutcome {
        records: vec![record],
        runtimes_ms: vec![elapsed],
    })
}

/// Debug path dump: one CSV row per step with the time, state coordinates
/// and per-step diagnostics (increment norm, frame-isometry deviation or
/// `|X|-1` constraint drift where applicable).
pub fn dump_first_path(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<(), RunError> {
    use std::io::Write;
    let est_cfg = cfg.estimator_config()?;
    let seed = heatgrad::pathsim::PathSeed {
        master: est_cfg.seed,
        stream: 0,
    };
    let path = if let Some(section) = &cfg.model {
        let model = build_model(section)?;
        heatgrad::pathsim::simulate_intrinsic(
            model.as_ref(),
            &cfg.estimator.x,
            est_cfg.horizon,
            est_cfg.steps,
            seed,
        )?
    } else {
        let sys = build_system(require_system(cfg)?)?;
        heatgrad::pathsim::simulate_extrinsic(
            &sys,
            &cfg.estimator.x,
            est_cfg.horizon,
            est_cfg.steps,
            seed,
            false,
        )?
    };
    let mut file = std::fs::File::create(out).map_err(|e| RunError::Other(e.into()))?;
    let d = path.state_dim;
    let mut header = String::from("t");
    for i in 1..=d {
        header.push_str(&format!(",x{i}"));
    }
    header.push_str(",increment_norm,frame_deviation,radius_drift");
    writeln!(file, "{header}").map_err(|e| RunError::Other(e.into()))?;
    for k in 0..=path.steps {
        let mut row = format!("{:.16e}", path.time(k));
        for &c in path.x(k) {
            row.push_str(&format!(",{c:.16e}"));
        }
        let inc = if k < path.steps {
            path.increment_vec(k).norm()
        } else {
            0.0
        };
        let frame_dev = path
            .frame(k)
            .map(|f| {
                let n = f.ncols();
                (f.transpose() * &f - heatgrad::nalgebra::DMatrix::<f64>::identity(n, n)).amax()
            })
            .unwrap_or(0.0);
        let radius: f64 = path.x(k).iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0;
        row.push_str(&format!(",{inc:.16e},{frame_dev:.16e},{radius:.16e}"));
        writeln!(file, "{row}").map_err(|e| RunError::Other(e.into()))?;
    }
    Ok(())
}

fn require<'a, T>(opt: &'a Option<T>, what: &str) -> Result<&'a T, RunError> {
    opt.as_ref()
        .ok_or_else(|| RunError::Other(anyhow!("estimator needs `{what}`")))
}

fn require_model(
    cfg: &ExperimentConfig,
) -> Result<&crate::config::ModelSection, RunError> {
    cfg.model
        .as_ref()
        .ok_or_else(|| RunError::Other(anyhow!("this estimator needs a [model] section")))
}

fn require_system(
    cfg: &ExperimentConfig,
) -> Result<&crate::config::SystemSection, RunError> {
    cfg.system
        .as_ref()
        .ok_or_else(|| RunError::Other(anyhow!("this estimator needs a [system] section")))
}

fn sup_norms(h: &crate::config::HarnackSection) -> Result<SupNorms, RunError> {
    match (h.v_sup, h.div_v_sup) {
        (Some(v_sup), Some(div_v_sup)) => Ok(SupNorms { v_sup, div_v_sup }),
        _ => Err(RunError::Other(anyhow!(
            "harnack checks need `v_sup` and `div_v_sup` in [harnack]"
        ))),
    }
}

fn alpha_mode(h: &crate::config::HarnackSection) -> Result<AlphaMode, RunError> {
    match h.mode.as_deref().unwrap_or("empirical") {
        "empirical" => Ok(AlphaMode::Empirical),
        "analytic" => Ok(AlphaMode::Analytic),
        other => Err(RunError::Other(anyhow!(
            "unknown alpha mode `{other}` (empirical | analytic)"
        ))),
    }
}
