//! Configuration-driven experiment runner for the semigroup estimators.
//!
//! Subcommands: `run <config>` executes an experiment described by a TOML
//! file and writes `results.json` / `results.csv`; `selftest` runs the
//! invariant suite; `describe <name>` dumps the geometry of a built-in
//! model or system at a point. The env var `SEMIGROUP_SEED` overrides the
//! configured seed.
//!
//! Exit codes: 0 success, 1 configuration/schema error, 2 martingale-gate
//! refusal, 3 numerical error, 4 self-test failure.

use heatgrad_cli::{config, describe, output, parallel, runexp, selftest};

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "heatgrad", version, about = "Monte Carlo derivative and divergence formulae for diffusion semigroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides [output].dir; default "out").
        #[arg(long)]
        output: Option<PathBuf>,
        /// Debug: dump the first simulated path as CSV (t, X, diagnostics).
        #[arg(long)]
        debug_dump_path: Option<PathBuf>,
    },
    /// Run the invariant suite and print a pass/fail table.
    Selftest {
        /// Reduced sample counts with wider gates.
        #[arg(long)]
        quick: bool,
        /// Negative control: corrupt a built-in model and expect failure.
        #[arg(long, hide = true)]
        corrupt_model: bool,
    },
    /// Print the geometry of a built-in model/system at a point.
    Describe {
        name: String,
        /// Comma-separated chart coordinates.
        #[arg(long)]
        at: Option<String>,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            output,
            debug_dump_path,
        } => run(&config, output, debug_dump_path),
        Command::Selftest {
            quick,
            corrupt_model,
        } => selftest::selftest(quick, corrupt_model),
        Command::Describe { name, at, json } => describe_cmd(&name, at, json),
    };
    std::process::exit(code);
}

fn run(
    config_path: &std::path::Path,
    output_override: Option<PathBuf>,
    debug_dump_path: Option<PathBuf>,
) -> i32 {
    let cfg = match config::ExperimentConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    if let Some(dump) = &debug_dump_path {
        if let Err(e) = runexp::dump_first_path(&cfg, dump) {
            eprintln!("error: {e}");
            return 1;
        }
    }
    let out_dir = output_override.unwrap_or_else(|| {
        cfg.output
            .as_ref()
            .map(|o| PathBuf::from(&o.dir))
            .unwrap_or_else(|| PathBuf::from("out"))
    });
    match runexp::execute(&cfg) {
        Ok(outcome) => {
            if let Err(e) = output::write_outputs(&out_dir, &outcome.records, &outcome.runtimes_ms)
            {
                eprintln!("error writing outputs: {e:#}");
                return 3;
            }
            for (rec, ms) in outcome.records.iter().zip(&outcome.runtimes_ms) {
                let verdict = rec
                    .verdict
                    .as_ref()
                    .map(|v| format!("  verdict={v}"))
                    .unwrap_or_default();
                println!(
                    "{}: mean={:?} se={:?} samples={} seed={} ({} ms){verdict}",
                    rec.estimator, rec.mean, rec.std_error, rec.samples, rec.seed, ms
                );
            }
            println!("wrote {}", out_dir.join("results.json").display());
            0
        }
        Err(runexp::RunError::Core(e)) => {
            eprintln!("error: {e}");
            parallel::exit_code_for(&e)
        }
        Err(runexp::RunError::Other(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn describe_cmd(name: &str, at: Option<String>, json: bool) -> i32 {
    let point = match at {
        Some(text) => {
            let parsed: Result<Vec<f64>, _> =
                text.split(',').map(|s| s.trim().parse::<f64>()).collect();
            match parsed {
                Ok(p) => Some(p),
                Err(e) => {
                    eprintln!("error: bad --at point: {e}");
                    return 1;
                }
            }
        }
        None => None,
    };
    match describe::describe(name, point, json) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
