//! `selftest [--quick]`: the invariant suite at reduced sample counts,
//! printed as one pass/fail line per check.

use heatgrad::estim::{
    bismut_backward_gradient, divergence_expectation, feynman_kac_div_check, forward_log_gradient,
    ptvf_extrinsic, ptvf_intrinsic, Conditioning, Diffusion, EstimatorConfig,
};
use heatgrad::fields::{OneForm, ScalarField, VectorField};
use heatgrad::geom::extrinsic::validate_system;
use heatgrad::geom::intrinsic::validate_model;
use heatgrad::geom::{EuclideanModel, ExtrinsicSystem, SphereModel};
use heatgrad::harnack::{shift_harnack_verify, AlphaMode, DiffeoFamily, ShiftForm, Verdict};
use heatgrad::pathsim::{simulate_intrinsic, PathSeed};
use heatgrad::nalgebra::{DMatrix, DVector};

struct Check {
    name: &'static str,
    outcome: Result<String, String>,
}

fn run_check(
    checks: &mut Vec<Check>,
    name: &'static str,
    f: impl FnOnce() -> Result<String, String>,
) {
    checks.push(Check {
        name,
        outcome: f(),
    });
}

/// Wide statistical gate for the reduced-sample self-test.
const GATE: f64 = 5.0;

pub fn selftest(quick: bool, corrupt_model: bool) -> i32 {
    let scale = if quick { 1 } else { 4 };
    let samples = 1500 * scale;
    let seed = 20_260_810;
    let mut checks: Vec<Check> = Vec::new();

    // Geometry validation of the built-in models and systems.
    run_check(&mut checks, "metric compatibility", || {
        let model = if corrupt_model {
            EuclideanModel::ou(2, 1.0).with_corrupted_christoffel()
        } else {
            EuclideanModel::ou(2, 1.0)
        };
        validate_model(&model).ok().map_err(|e| format!("{e}"))?;
        Ok("euclidean-ou identities hold".into())
    });
    run_check(&mut checks, "sphere model validation", || {
        validate_model(&SphereModel::new(2))
            .ok()
            .map_err(|e| format!("{e}"))?;
        Ok("transport isometry / Gauss Ricci / divergence identities hold".into())
    });
    run_check(&mut checks, "extrinsic system validation", || {
        for sys in [
            ExtrinsicSystem::identity(2),
            ExtrinsicSystem::scaled_diagonal(),
            ExtrinsicSystem::sphere_projection(),
        ] {
            validate_system(&sys)
                .ok()
                .map_err(|e| format!("{}: {e}", sys.name()))?;
        }
        Ok("non-degeneracy / dA / projector / torsion antisymmetry".into())
    });

    // Transport isometry along a simulated path.
    run_check(&mut checks, "transport isometry", || {
        let model = SphereModel::new(2);
        let p = simulate_intrinsic(
            &model,
            &[0.0, 0.0, 1.0],
            0.5,
            256,
            PathSeed {
                master: seed,
                stream: 0,
            },
        )
        .map_err(|e| format!("{e}"))?;
        let mut worst = 0.0f64;
        for k in 0..=p.steps {
            let f = p.frame(k).unwrap();
            let gram = f.transpose() * &f;
            worst = worst.max((gram - DMatrix::<f64>::identity(2, 2)).amax());
        }
        if worst <= 1e-6 {
            Ok(format!("max deviation {worst:.2e}"))
        } else {
            Err(format!("frame gram deviates by {worst:.2e}"))
        }
    });

    // Oracle agreements at reduced sample counts.
    run_check(&mut checks, "flat divergence formula", || {
        let model = EuclideanModel::flat(2);
        let v = VectorField::new(DVector::from_column_slice).with_divergence(|_| 2.0);
        let est = divergence_expectation(
            &model,
            v,
            &[0.0, 0.0],
            EstimatorConfig::new(1.0, 64, samples, seed),
        )
        .map_err(|e| format!("{e}"))?;
        gate(est.value(), 2.0, est.se(), "E[div V]")
    });
    run_check(&mut checks, "ou backward gradient", || {
        let model = EuclideanModel::ou(1, 1.0);
        let est = bismut_backward_gradient(
            Diffusion::Intrinsic(&model),
            ScalarField::new(|y| y[0]),
            &[1.0],
            DVector::from_column_slice(&[1.0]),
            EstimatorConfig::new(1.0, 64, samples, seed + 1),
        )
        .map_err(|e| format!("{e}"))?;
        gate(est.value(), (-1.0f64).exp(), est.se(), "(dP_T f)(v)")
    });
    run_check(&mut checks, "sphere eigenfunction decay", || {
        let model = SphereModel::new(2);
        let v = VectorField::new(|y: &[f64]| {
            DVector::from_column_slice(&[-y[0] * y[2], -y[1] * y[2], 1.0 - y[2] * y[2]])
        })
        .with_divergence(|y| -2.0 * y[2]);
        let est = divergence_expectation(
            &model,
            v,
            &[0.0, 0.0, 1.0],
            EstimatorConfig::new(0.5, 96, samples, seed + 2),
        )
        .map_err(|e| format!("{e}"))?;
        gate(est.value(), -2.0 * (-1.0f64).exp(), est.se(), "E[div grad z]")
    });
    run_check(&mut checks, "derivative-free consistency", || {
        let model = EuclideanModel::flat(2);
        let sys = ExtrinsicSystem::identity(2);
        let f = ScalarField::new(|y: &[f64]| y[0] * y[0] + y[1] * y[1]);
        let v = VectorField::constant(DVector::from_column_slice(&[1.0, 0.0]));
        let cfg = EstimatorConfig::new(1.0, 64, samples, seed + 3);
        let a = ptvf_intrinsic(&model, f.clone(), v.clone(), &[1.0, 0.0], cfg.clone())
            .map_err(|e| format!("{e}"))?;
        let b = ptvf_extrinsic(&sys, f, v, &[1.0, 0.0], cfg).map_err(|e| format!("{e}"))?;
        let comb = (a.se().powi(2) + b.se().powi(2)).sqrt();
        gate(a.value() - b.value(), 0.0, comb, "intrinsic - extrinsic")
    });
    run_check(&mut checks, "forward log-gradient (bridge)", || {
        let model = EuclideanModel::flat(2);
        let est = forward_log_gradient(
            Diffusion::Intrinsic(&model),
            &[0.0, 0.0],
            &[1.0, 0.0],
            Conditioning::ExactBridge,
            EstimatorConfig::new(0.5, 48, samples.min(2000), seed + 4),
        )
        .map_err(|e| format!("{e}"))?;
        gate(est.mean[0], -1.0, est.std_error[0], "∇ log p component 1")
    });
    run_check(&mut checks, "feynman-kac commutation", || {
        let model = EuclideanModel::flat(2);
        let alpha = OneForm::new(|y: &[f64]| {
            DVector::from_column_slice(&[2.0 * y[0], 2.0 * y[1]])
        })
        .with_divergence(|_| 4.0);
        let rep = feynman_kac_div_check(
            &model,
            alpha,
            &[0.2, -0.1],
            EstimatorConfig::new(0.5, 48, samples.min(2000), seed + 5),
            None,
        )
        .map_err(|e| format!("{e}"))?;
        if rep.gap <= GATE * rep.combined_se + 1e-9 {
            Ok(format!("gap {:.2e} (se {:.2e})", rep.gap, rep.combined_se))
        } else {
            Err(format!("gap {:.2e} vs se {:.2e}", rep.gap, rep.combined_se))
        }
    });
    run_check(&mut checks, "shift-harnack null family", || {
        let model = EuclideanModel::flat(1);
        let rep = shift_harnack_verify(
            &model,
            &ScalarField::new(|y: &[f64]| (-y[0] * y[0] / 4.0).exp() + 0.1),
            &DiffeoFamily::identity(1),
            &[0.0],
            1.0,
            ShiftForm::Power,
            AlphaMode::Empirical,
            &EstimatorConfig::new(1.0, 48, samples.min(2000), seed + 6),
        )
        .map_err(|e| format!("{e}"))?;
        if rep.verdict == Verdict::Holds {
            Ok(format!("slack {:+.2e}", rep.slack))
        } else {
            Err(format!("verdict {:?}", rep.verdict))
        }
    });
    run_check(&mut checks, "determinism", || {
        let model = EuclideanModel::ou(2, 1.0);
        let v = VectorField::new(DVector::from_column_slice);
        let run = || {
            divergence_expectation(
                &model,
                v.clone(),
                &[0.4, -0.2],
                EstimatorConfig::new(1.0, 48, 500, seed + 7),
            )
        };
        let a = run().map_err(|e| format!("{e}"))?;
        let b = run().map_err(|e| format!("{e}"))?;
        if a == b {
            Ok("identical seed reproduces the estimate bitwise".into())
        } else {
            Err("same seed produced different estimates".into())
        }
    });

    let mut first_failure: Option<&'static str> = None;
    for c in &checks {
        match &c.outcome {
            Ok(detail) => println!("PASS  {:<32} {detail}", c.name),
            Err(detail) => {
                println!("FAIL  {:<32} {detail}", c.name);
                if first_failure.is_none() {
                    first_failure = Some(c.name);
                }
            }
        }
    }
    match first_failure {
        None => {
            println!("self-test: all {} checks passed", checks.len());
            0
        }
        Some(name) => {
            eprintln!("self-test failed at invariant: {name}");
            4
        }
    }
}

fn gate(value: f64, target: f64, se: f64, label: &str) -> Result<String, String> {
    if (value - target).abs() <= GATE * se + 1e-12 {
        Ok(format!("{label} = {value:.4} vs {target:.4} (se {se:.1e})"))
    } else {
        Err(format!(
            "{label} = {value:.4} vs {target:.4} exceeds {GATE} se ({se:.1e})"
        ))
    }
}
