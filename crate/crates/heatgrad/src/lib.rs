//! Monte Carlo estimators for derivative and divergence formulae of
//! diffusion semigroups on manifolds.
//!
//! A diffusion `X_t` with generator `Δ + Z` (full Laplace–Beltrami operator,
//! so the driving Brownian motion runs at speed 2: `dB^i dB^j = 2 δ_ij dt`)
//! admits probabilistic formulae for quantities such as `(dP_T f)(v)`,
//! `E[(div V)(X_T)]`, `P_T(V(f))` and `∇ log p_T(x,·)` in terms of pathwise
//! weights built from stochastic parallel transport and damped transports.
//! This crate simulates the paths, integrates the damped-transport and
//! derivative-flow processes along them, and assembles the weights into
//! sample-mean estimators with standard errors.
//!
//! Two descriptions of the diffusion are supported:
//!
//! - **intrinsic** ([`geom::intrinsic`], [`pathsim::simulate_intrinsic`]):
//!   the manifold is given by a metric, Christoffel symbols, Ricci tensor
//!   and a drift field; paths are simulated on the orthonormal frame bundle
//!   and weights use the damped parallel transports `Θ_t`, `Q_t`.
//! - **extrinsic** ([`geom::extrinsic`], [`pathsim::simulate_extrinsic`]):
//!   the diffusion solves `dX = A₀ dt + A(X) ∘ dB` for a bundle map
//!   `A: M×ℝᵐ → TM`; weights use the derivative flow `TX_t` and the
//!   process `Ξ_t`, and the geometry (metric, Le Jan–Watanabe connection,
//!   torsion) is induced by `A`.
//!
//! The crate is `no_std`-compatible (with `alloc`); parallel sample fan-out
//! and all file IO live in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub use nalgebra;

pub mod error;
pub mod estim;
pub mod expr;
pub mod fields;
pub mod geom;
pub mod harnack;
pub mod linalg;
pub mod pathsim;
pub mod rate;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use estim::{EstimatorConfig, MCEstimate};
pub use rate::RateProcess;
