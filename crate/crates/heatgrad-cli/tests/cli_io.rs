// End-to-end tests of the binary: config validation, exit codes, output
// formats and the seed override.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heatgrad"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const MINIMAL: &str = r#"
[experiment]
name = "flat-divergence"
seed = 42

[model]
kind = "euclidean"
dim = 2

[estimator]
name = "divergence_expectation"
T = 1.0
steps = 64
samples = 10000
workers = 2
x = [0.0, 0.0]
V = ["x1", "x2"]
div_v = "2"
"#;

#[test]
fn minimal_run_produces_outputs_near_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", MINIMAL);
    let out = dir.path().join("out");
    let status = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    let rec = &json[0];
    assert_eq!(rec["estimator"], "divergence_expectation");
    let mean = rec["mean"][0].as_f64().unwrap();
    let se = rec["std_error"][0].as_f64().unwrap();
    assert!((mean - 2.0).abs() <= 4.0 * se, "mean {mean} se {se}");

    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "name,mean,std_error,samples,seed,runtime_ms,verdict"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "divergence_expectation");
    // Round trip: CSV floats reproduce the JSON numerics to full precision.
    assert_eq!(row[1].parse::<f64>().unwrap(), mean);
    assert_eq!(row[2].parse::<f64>().unwrap(), se);
    assert_eq!(row[3], "10000");
    assert_eq!(row[4], "42");
}

#[test]
fn h_constraint_violation_exits_one_naming_h() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &MINIMAL.replace(
            "div_v = \"2\"",
            "div_v = \"2\"\nh = { knots = [0.0, 1.0], values = [0.0, 0.5] }",
        ),
    );
    let output = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("h(0) = 0 and h(T) = 1"), "stderr: {err}");
}

#[test]
fn unknown_key_is_schema_violation_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "unknown.toml",
        &MINIMAL.replace("seed = 42", "seed = 42\nwhatever = 1"),
    );
    let output = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("whatever"), "stderr should name the key: {err}");
}

#[test]
fn gate_refusal_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gate.toml",
        r#"
[experiment]
name = "gate"
seed = 7

[model]
kind = "euclidean"
dim = 1
drift = "custom"
drift_exprs = ["-x1 ^ 3"]

[estimator]
name = "divergence_expectation"
T = 0.25
steps = 16
samples = 50
x = [0.0]
V = ["x1"]
"#,
    );
    let output = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("curvature_lower_bound"), "stderr: {err}");

    // With the override flag the same config runs.
    let cfg2 = write_config(
        dir.path(),
        "gate-override.toml",
        &std::fs::read_to_string(&cfg)
            .unwrap()
            .replace("V = [\"x1\"]", "V = [\"x1\"]\noverride_martingale_gate = true"),
    );
    let status = bin()
        .arg("run")
        .arg(&cfg2)
        .arg("--output")
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn seed_env_var_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", MINIMAL);
    let out = dir.path().join("seeded");
    let status = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .env("SEMIGROUP_SEED", "99")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(json[0]["seed"], 99);
}

#[test]
fn selftest_quick_passes_and_corrupt_model_fails() {
    let status = bin().arg("selftest").arg("--quick").status().unwrap();
    assert_eq!(status.code(), Some(0));

    let output = bin()
        .arg("selftest")
        .arg("--quick")
        .arg("--corrupt-model")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let all = format!(
        "{}{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(all.contains("metric compatibility"), "{all}");
}

#[test]
fn describe_known_and_unknown_names() {
    let output = bin()
        .arg("describe")
        .arg("scaled-diagonal")
        .arg("--at")
        .arg("1.0,0.0")
        .arg("--json")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(doc["name"], "scaled-diagonal");
    // ρ = det g = 0.64 at (1, 0).
    let rho = doc["density_rho"].as_f64().unwrap();
    assert!((rho - 0.64).abs() < 1e-12);

    let status = bin().arg("describe").arg("nonsense").status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn harnack_experiment_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sh.toml",
        r#"
[experiment]
name = "shift-harnack"
seed = 5

[model]
kind = "euclidean"
dim = 1

[estimator]
name = "shift_harnack_verify"
T = 1.0
steps = 64
samples = 4000
x = [0.0]
f = "exp(-x1 ^ 2 / 4) + 0.1"

[harnack]
p = 2.0
form = "power"
shift_r = 0.5
mode = "empirical"
"#,
    );
    let out = dir.path().join("out");
    let status = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(json[0]["verdict"], "holds");
    assert!(json[0]["nodes"].as_array().unwrap().len() == 16);
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",holds"));
}

#[test]
fn debug_path_dump_writes_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", MINIMAL);
    let dump = dir.path().join("path.csv");
    let status = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--output")
        .arg(dir.path().join("out"))
        .arg("--debug-dump-path")
        .arg(&dump)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&dump).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,x1,x2,increment_norm,frame_deviation,radius_drift"
    );
    assert_eq!(lines.count(), 65); // steps + 1 rows
}
