//! Deterministic parallel sample fan-out.
//!
//! Each path's randomness is keyed by its index, and rayon's indexed
//! `collect` preserves order, so the collected contributions (and with
//! them the pairwise-reduced estimate) are bitwise identical to a
//! sequential run regardless of the worker count.

use heatgrad::estim::{SampleKernel, SampleRunner};
use heatgrad::{Error, Result};
use rayon::prelude::*;

pub struct RayonRunner {
    pool: rayon::ThreadPool,
}

impl RayonRunner {
    pub fn new(workers: usize) -> anyhow::Result<Self> {
        let workers = if workers == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            workers
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()?;
        Ok(RayonRunner { pool })
    }
}

impl SampleRunner for RayonRunner {
    fn collect(&self, kernel: &dyn SampleKernel) -> Result<Vec<Vec<f64>>> {
        self.pool.install(|| {
            (0..kernel.samples() as u64)
                .into_par_iter()
                .map(|i| kernel.sample(i))
                .collect::<Result<Vec<_>>>()
        })
    }
}

/// Map a core error to the CLI exit code contract: 1 = configuration,
/// 2 = gate refusal, 3 = numerical.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Validation { .. } => 1,
        Error::GateRefused { .. } => 2,
        Error::Degenerate { .. }
        | Error::Exploded { .. }
        | Error::Numerical(_)
        | Error::InsufficientConditioning { .. } => 3,
    }
}
