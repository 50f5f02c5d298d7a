//! `describe <name> [--at <point>]`: dump the geometry a user needs to
//! sanity-check a model or system at a point.

use anyhow::{anyhow, bail};
use heatgrad::geom::extrinsic::validate_system;
use heatgrad::geom::intrinsic::validate_model;
use heatgrad::geom::{EuclideanModel, ExtrinsicSystem, ManifoldModel, SphereModel};
use heatgrad::nalgebra::{DMatrix, DVector};
use serde_json::json;

pub fn known_names() -> &'static [&'static str] {
    &[
        "euclidean",
        "euclidean-ou",
        "sphere",
        "identity",
        "scaled-diagonal",
        "sphere-projection",
    ]
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn describe(name: &str, at: Option<Vec<f64>>, as_json: bool) -> anyhow::Result<String> {
    let doc = match name {
        "euclidean" | "euclidean-ou" | "sphere" => {
            let model: Box<dyn ManifoldModel> = match name {
                "euclidean" => Box::new(EuclideanModel::flat(2)),
                "euclidean-ou" => Box::new(EuclideanModel::ou(2, 1.0)),
                _ => Box::new(SphereModel::new(2)),
            };
            let d = model.state_dim();
            let x = match at {
                Some(p) => {
                    if p.len() != d {
                        bail!("point needs {d} coordinates for `{name}`");
                    }
                    model.retract(DVector::from_column_slice(&p))
                }
                None => {
                    let mut p = DVector::zeros(d);
                    if name == "sphere" {
                        p[d - 1] = 1.0;
                    }
                    p
                }
            };
            let gam = model.christoffel(x.as_slice());
            let report = validate_model(model.as_ref());
            json!({
                "kind": "intrinsic",
                "name": name,
                "dim": model.dim(),
                "state_dim": d,
                "point": x.as_slice(),
                "metric": matrix_rows(&model.metric(x.as_slice())),
                "christoffel": gam.iter().map(matrix_rows).collect::<Vec<_>>(),
                "ricci": matrix_rows(&model.ricci(x.as_slice())),
                "drift": model.drift(x.as_slice()).as_slice(),
                "div_drift": model.div_drift(x.as_slice()),
                "curvature_lower_bound": model.curvature_lower_bound(),
                "validation": report.checks.iter().map(|c| json!({
                    "name": c.name,
                    "max_rel_error": c.max_rel_error,
                    "tolerance": c.tolerance,
                    "pass": c.passed(),
                })).collect::<Vec<_>>(),
            })
        }
        "identity" | "scaled-diagonal" | "sphere-projection" => {
            let sys: ExtrinsicSystem = match name {
                "identity" => ExtrinsicSystem::identity(2),
                "scaled-diagonal" => ExtrinsicSystem::scaled_diagonal(),
                _ => ExtrinsicSystem::sphere_projection(),
            };
            let d = sys.state_dim();
            let x = match at {
                Some(p) => {
                    if p.len() != d {
                        bail!("point needs {d} coordinates for `{name}`");
                    }
                    sys.retract(DVector::from_column_slice(&p))
                }
                None => {
                    let mut p = DVector::zeros(d);
                    if name == "sphere-projection" {
                        p[d - 1] = 1.0;
                    } else {
                        p[0] = 1.0;
                    }
                    p
                }
            };
            let xs = x.as_slice();
            let met = sys.metric_ops(xs).map_err(|e| anyhow!("{e}"))?;
            // Torsion samples on coordinate-direction tangent pairs.
            let mut torsion_samples = Vec::new();
            for i in 0..d {
                for j in (i + 1)..d {
                    let mut v = DVector::zeros(d);
                    v[i] = 1.0;
                    let mut u = DVector::zeros(d);
                    u[j] = 1.0;
                    let v = sys.tangent_project(xs, &v).map_err(|e| anyhow!("{e}"))?;
                    let u = sys.tangent_project(xs, &u).map_err(|e| anyhow!("{e}"))?;
                    let t = sys.ljw_torsion(xs, &v, &u).map_err(|e| anyhow!("{e}"))?;
                    torsion_samples.push(json!({
                        "pair": [i, j],
                        "value": t.as_slice(),
                    }));
                }
            }
            let report = validate_system(&sys);
            json!({
                "kind": "extrinsic",
                "name": name,
                "manifold_dim": sys.manifold_dim(),
                "state_dim": d,
                "noise_dim": sys.noise_dim(),
                "point": xs,
                "a": matrix_rows(&sys.a(xs)),
                "metric": matrix_rows(&met.g),
                "sigma_min": met.sigma_min,
                "torsion_samples": torsion_samples,
                "trace_nabla_hat_a0": sys.trace_nabla_hat_a0(xs).map_err(|e| anyhow!("{e}"))?,
                "a0a": sys.a0a_field(xs).map_err(|e| anyhow!("{e}"))?.as_slice(),
                "density_rho": sys.density_rho(xs).map_err(|e| anyhow!("{e}"))?,
                "validation": report.checks.iter().map(|c| json!({
                    "name": c.name,
                    "max_rel_error": c.max_rel_error,
                    "tolerance": c.tolerance,
                    "pass": c.passed(),
                })).collect::<Vec<_>>(),
            })
        }
        other => bail!(
            "unknown name `{other}`; known: {}",
            known_names().join(", ")
        ),
    };
    if as_json {
        Ok(format!("{}\n", serde_json::to_string_pretty(&doc)?))
    } else {
        Ok(render_text(&doc))
    }
}

fn render_text(doc: &serde_json::Value) -> String {
    let mut out = String::new();
    let push = |out: &mut String, k: &str, v: &serde_json::Value| {
        out.push_str(&format!("{k}: {v}\n"));
    };
    if let Some(map) = doc.as_object() {
        for (k, v) in map {
            push(&mut out, k, v);
        }
    }
    out
}
