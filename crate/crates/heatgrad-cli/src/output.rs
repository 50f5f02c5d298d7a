//! Result records and the JSON/CSV writers.
//!
//! `results.json` holds the estimate records (means, standard errors,
//! verdicts) and is byte-identical across runs with the same seed.
//! `results.csv` holds one row per estimator invocation with the fixed
//! column order
//!
//! `name,mean,std_error,samples,seed,runtime_ms,verdict`
//!
//! where vector-valued cells join components with `;`. Floats print with 17
//! significant digits (`{:.16e}`), so parsing the CSV reproduces the JSON
//! numerics exactly. Timing lives only in the CSV: it can never be
//! deterministic, and the JSON is the determinism surface.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub estimator: String,
    pub inputs_digest: String,
    pub seed: u64,
    pub samples: usize,
    /// Estimate components (the left-hand side for inequality checks).
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub ci95_lo: Vec<f64>,
    pub ci95_hi: Vec<f64>,
    pub aborted_paths: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combined_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_dominated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<(f64, f64)>>,
}

impl ResultRecord {
    pub fn from_estimate(
        estimator: &str,
        digest: &str,
        est: &heatgrad::MCEstimate,
    ) -> ResultRecord {
        let (lo, hi) = est.ci95();
        ResultRecord {
            estimator: estimator.to_string(),
            inputs_digest: digest.to_string(),
            seed: est.seed,
            samples: est.samples,
            mean: est.mean.iter().copied().collect(),
            std_error: est.std_error.iter().copied().collect(),
            ci95_lo: lo.iter().copied().collect(),
            ci95_hi: hi.iter().copied().collect(),
            aborted_paths: est.aborted_paths,
            verdict: None,
            rhs: None,
            rhs_se: None,
            slack: None,
            combined_se: None,
            gap: None,
            fd_step: None,
            noise_dominated: None,
            nodes: None,
        }
    }

    pub fn from_harnack(
        estimator: &str,
        digest: &str,
        seed: u64,
        samples: usize,
        rep: &heatgrad::harnack::HarnackReport,
    ) -> ResultRecord {
        let verdict = match rep.verdict {
            heatgrad::harnack::Verdict::Holds => "holds",
            heatgrad::harnack::Verdict::ViolatedWithinNoise => "violated-within-noise",
            heatgrad::harnack::Verdict::Violated => "violated",
        };
        ResultRecord {
            estimator: estimator.to_string(),
            inputs_digest: digest.to_string(),
            seed,
            samples,
            mean: vec![rep.lhs],
            std_error: vec![rep.lhs_se],
            ci95_lo: vec![rep.lhs - 1.96 * rep.lhs_se],
            ci95_hi: vec![rep.lhs + 1.96 * rep.lhs_se],
            aborted_paths: 0,
            verdict: Some(verdict.to_string()),
            rhs: Some(rep.rhs),
            rhs_se: Some(rep.rhs_se),
            slack: Some(rep.slack),
            combined_se: Some(rep.combined_se),
            gap: None,
            fd_step: None,
            noise_dominated: None,
            nodes: Some(rep.nodes.clone()),
        }
    }

    pub fn from_fk(
        estimator: &str,
        digest: &str,
        rep: &heatgrad::estim::FkReport,
    ) -> ResultRecord {
        let verdict = if rep.gap <= 3.0 * rep.combined_se + 1e-12 {
            "holds"
        } else {
            "gap"
        };
        ResultRecord {
            estimator: estimator.to_string(),
            inputs_digest: digest.to_string(),
            seed: rep.lhs.seed,
            samples: rep.lhs.samples,
            mean: vec![rep.lhs.value()],
            std_error: vec![rep.lhs.se()],
            ci95_lo: vec![rep.lhs.value() - 1.96 * rep.lhs.se()],
            ci95_hi: vec![rep.lhs.value() + 1.96 * rep.lhs.se()],
            aborted_paths: 0,
            verdict: Some(verdict.to_string()),
            rhs: Some(rep.rhs.value()),
            rhs_se: Some(rep.rhs.se()),
            slack: None,
            combined_se: Some(rep.combined_se),
            gap: Some(rep.gap),
            fd_step: Some(rep.fd_step),
            noise_dominated: Some(rep.noise_dominated),
            nodes: None,
        }
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn join17(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(";")
}

pub fn write_outputs(
    dir: &Path,
    records: &[ResultRecord],
    runtimes_ms: &[u128],
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;

    let json_path = dir.join("results.json");
    let mut json = serde_json::to_string_pretty(records)?;
    json.push('\n');
    std::fs::write(&json_path, json)?;

    let csv_path = dir.join("results.csv");
    let mut file = std::fs::File::create(&csv_path)?;
    writeln!(file, "name,mean,std_error,samples,seed,runtime_ms,verdict")?;
    for (rec, &ms) in records.iter().zip(runtimes_ms) {
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            rec.estimator,
            join17(&rec.mean),
            join17(&rec.std_error),
            rec.samples,
            rec.seed,
            ms,
            rec.verdict.clone().unwrap_or_default(),
        )?;
    }
    Ok(())
}
