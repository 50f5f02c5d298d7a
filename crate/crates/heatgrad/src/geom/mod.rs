//! Geometry backends: intrinsic manifold models and extrinsic bundle-map
//! systems.
//!
//! All model and system evaluations are pure functions of their inputs
//! with no interior mutability, so both backends are safe for concurrent
//! read-only use from any number of workers; finite-difference fallbacks
//! allocate only locally.

pub mod extrinsic;
pub mod intrinsic;

pub use extrinsic::ExtrinsicSystem;
pub use intrinsic::{
    parallel_transport_step, validate_model, weitzenbock_endomorphism, EuclideanModel,
    ManifoldModel, SphereModel, ValidationReport, WeitzenbockEndomorphism, WeitzenbockVariant,
};
