//! Error types shared by the geometry, simulation and estimator modules.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration: unknown variant, bad rate-process endpoints,
    /// missing field, inconsistent dimensions.
    Config(String),
    /// The bundle map lost surjectivity: smallest admissible singular value
    /// of `A(x)` dropped below the declared tolerance.
    Degenerate { sigma_min: f64, tol: f64 },
    /// A simulated path left the configured safe region. Estimators treat
    /// this as fatal: the formulae assume non-explosive diffusions and
    /// silently dropping paths would bias the estimate.
    Exploded { step: usize, path: u64 },
    /// A true-martingale hypothesis could not be verified from the declared
    /// model metadata and the override flag was not set.
    GateRefused { hypothesis: &'static str },
    /// Numerical breakdown: singular derivative flow, failed factorization.
    Numerical(String),
    /// A geometry self-check exceeded its tolerance.
    Validation {
        identity: String,
        max_rel_error: f64,
        tolerance: f64,
    },
    /// Kernel-weighted conditioning left too little effective mass near the
    /// target point.
    InsufficientConditioning { ess: f64, minimum: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Degenerate { sigma_min, tol } => write!(
                f,
                "degenerate bundle map: sigma_min = {sigma_min:.3e} below tolerance {tol:.3e}"
            ),
            Error::Exploded { step, path } => write!(
                f,
                "path {path} left the safe region at step {step}; estimate aborted"
            ),
            Error::GateRefused { hypothesis } => write!(
                f,
                "true-martingale gate refused: hypothesis `{hypothesis}` not declared \
                 (set the override flag to run anyway)"
            ),
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::Validation {
                identity,
                max_rel_error,
                tolerance,
            } => write!(
                f,
                "validation failure: identity `{identity}` has max relative error \
                 {max_rel_error:.3e} > {tolerance:.3e}"
            ),
            Error::InsufficientConditioning { ess, minimum } => write!(
                f,
                "insufficient conditioning: effective sample size {ess:.1} < {minimum:.1}"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
