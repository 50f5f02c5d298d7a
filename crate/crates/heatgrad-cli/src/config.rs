//! Experiment configuration: a TOML file with nested tables, strictly
//! validated (unknown keys are rejected with their path).

use anyhow::{bail, Context};
use heatgrad::expr::Expr;
use heatgrad::fields::{OneForm, ScalarField, VectorField};
use heatgrad::geom::{EuclideanModel, ExtrinsicSystem, ManifoldModel, SphereModel};
use heatgrad::rate::RateProcess;
use heatgrad::EstimatorConfig;
use heatgrad::nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub system: Option<SystemSection>,
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub harnack: Option<HarnackSection>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "euclidean" or "sphere".
    pub kind: String,
    pub dim: usize,
    /// "none" | "ou" | "custom" (euclidean only).
    #[serde(default)]
    pub drift: Option<String>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub drift_exprs: Option<Vec<String>>,
    #[serde(default)]
    pub curvature_lower_bound: Option<f64>,
    #[serde(default)]
    pub div_drift_sup: Option<f64>,
    #[serde(default)]
    pub theta_damping_lower: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// "identity" | "scaled-diagonal" | "sphere-projection" | "custom".
    pub kind: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub manifold_dim: Option<usize>,
    #[serde(default)]
    pub a_exprs: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub a0_exprs: Option<Vec<String>>,
    #[serde(default)]
    pub surjectivity_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub name: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
    pub samples: usize,
    #[serde(default)]
    pub workers: Option<usize>,
    pub x: Vec<f64>,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    #[serde(default)]
    pub f: Option<String>,
    #[serde(rename = "V", default)]
    pub v_field: Option<Vec<String>>,
    #[serde(default)]
    pub div_v: Option<String>,
    #[serde(default)]
    pub alpha: Option<Vec<String>>,
    #[serde(default)]
    pub div_alpha: Option<String>,
    #[serde(default)]
    pub conditioning: Option<String>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub h: Option<RateSection>,
    #[serde(default)]
    pub override_martingale_gate: Option<bool>,
    #[serde(default)]
    pub safe_radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackSection {
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub form: Option<String>,
    #[serde(default)]
    pub shift_r: Option<f64>,
    #[serde(default)]
    pub shift_dir: Option<Vec<f64>>,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub v_sup: Option<f64>,
    #[serde(default)]
    pub div_v_sup: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("config schema violation: {e}"))?;
        cfg.cross_validate()?;
        Ok(cfg)
    }

    fn cross_validate(&self) -> anyhow::Result<()> {
        if self.model.is_some() == self.system.is_some() {
            bail!("config needs exactly one of [model] or [system]");
        }
        Ok(())
    }

    /// Stable digest of the full parsed configuration.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for b in hash.iter().take(8) {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    pub fn estimator_config(&self) -> anyhow::Result<EstimatorConfig> {
        let e = &self.estimator;
        let seed = match std::env::var("SEMIGROUP_SEED") {
            Ok(v) => v
                .parse::<u64>()
                .with_context(|| format!("SEMIGROUP_SEED must be a u64, got `{v}`"))?,
            Err(_) => self.experiment.seed,
        };
        let mut cfg = EstimatorConfig::new(e.horizon, e.steps, e.samples, seed);
        cfg.workers = e.workers.unwrap_or(0);
        if let Some(flag) = e.override_martingale_gate {
            cfg.override_martingale_gate = flag;
        }
        if let Some(r) = e.safe_radius {
            cfg.safe_radius = r;
        }
        if let Some(b) = e.bandwidth {
            cfg.bandwidth = Some(b);
        }
        if let Some(h) = &e.h {
            let rate = RateProcess::from_knots(h.knots.clone(), h.values.clone())
                .map_err(|err| anyhow::anyhow!("{err}"))?;
            cfg.rate = Some(rate);
        }
        Ok(cfg)
    }
}

fn parse_exprs(list: &[String], what: &str) -> anyhow::Result<Vec<Expr>> {
    list.iter()
        .map(|s| Expr::parse(s).map_err(|e| anyhow::anyhow!("{what}: {e}")))
        .collect()
}

/// Instantiate an intrinsic model by name (shared with `describe`).
pub fn build_model(section: &ModelSection) -> anyhow::Result<Box<dyn ManifoldModel>> {
    match section.kind.as_str() {
        "euclidean" => {
            let drift = section.drift.as_deref().unwrap_or("none");
            let model = match drift {
                "none" => EuclideanModel::flat(section.dim),
                "ou" => {
                    let lambda = section
                        .lambda
                        .ok_or_else(|| anyhow::anyhow!("ou drift needs `lambda`"))?;
                    EuclideanModel::ou(section.dim, lambda)
                }
                "custom" => {
                    let exprs = section
                        .drift_exprs
                        .as_ref()
                        .ok_or_else(|| anyhow::anyhow!("custom drift needs `drift_exprs`"))?;
                    EuclideanModel::with_custom_drift(section.dim, parse_exprs(exprs, "drift_exprs")?)
                        .map_err(|e| anyhow::anyhow!("{e}"))?
                        .with_declared_bounds(
                            section.curvature_lower_bound,
                            section.div_drift_sup,
                            section.theta_damping_lower,
                        )
                }
                other => bail!("unknown drift kind `{other}` (none | ou | custom)"),
            };
            Ok(Box::new(model))
        }
        "sphere" => Ok(Box::new(SphereModel::new(section.dim))),
        other => bail!("unknown model kind `{other}` (euclidean | sphere)"),
    }
}

/// Instantiate an extrinsic system by name (shared with `describe`).
pub fn build_system(section: &SystemSection) -> anyhow::Result<ExtrinsicSystem> {
    let mut sys = match section.kind.as_str() {
        "identity" => {
            let dim = section.dim.unwrap_or(2);
            ExtrinsicSystem::identity(dim)
        }
        "scaled-diagonal" => ExtrinsicSystem::scaled_diagonal(),
        "sphere-projection" => ExtrinsicSystem::sphere_projection(),
        "custom" => {
            let a_exprs = section
                .a_exprs
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("custom system needs `a_exprs`"))?;
            let rows: anyhow::Result<Vec<Vec<Expr>>> = a_exprs
                .iter()
                .map(|row| parse_exprs(row, "a_exprs"))
                .collect();
            let manifold_dim = section
                .manifold_dim
                .or(section.dim)
                .ok_or_else(|| anyhow::anyhow!("custom system needs `manifold_dim`"))?;
            ExtrinsicSystem::from_exprs("custom", manifold_dim, rows?, None)
                .map_err(|e| anyhow::anyhow!("{e}"))?
        }
        other => bail!(
            "unknown system kind `{other}` (identity | scaled-diagonal | sphere-projection | custom)"
        ),
    };
    if let Some(a0) = &section.a0_exprs {
        sys = sys
            .with_drift_exprs(parse_exprs(a0, "a0_exprs")?)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    if let Some(tol) = section.surjectivity_tol {
        sys = sys.with_surjectivity_tol(tol);
    }
    Ok(sys)
}

pub fn build_scalar_field(src: &str) -> anyhow::Result<ScalarField> {
    let e = Expr::parse(src).map_err(|e| anyhow::anyhow!("f: {e}"))?;
    Ok(ScalarField::from_expr(e))
}

pub fn build_vector_field(
    components: &[String],
    div: Option<&String>,
) -> anyhow::Result<VectorField> {
    let exprs = parse_exprs(components, "V")?;
    let mut field = VectorField::from_exprs(exprs);
    if let Some(d) = div {
        let e = Expr::parse(d).map_err(|e| anyhow::anyhow!("div_V: {e}"))?;
        field = field.with_divergence(move |x| e.eval(x));
    }
    Ok(field)
}

pub fn build_one_form(components: &[String], div: Option<&String>) -> anyhow::Result<OneForm> {
    let exprs = parse_exprs(components, "alpha")?;
    let dim = exprs.len();
    let mut form = OneForm::new(move |x: &[f64]| {
        DVector::from_iterator(dim, exprs.iter().map(|e| e.eval(x)))
    });
    if let Some(d) = div {
        let e = Expr::parse(d).map_err(|e| anyhow::anyhow!("div_alpha: {e}"))?;
        form = form.with_divergence(move |x| e.eval(x));
    }
    Ok(form)
}
