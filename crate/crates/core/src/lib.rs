//! Simulation-based supervised learning for biomarker event sequencing and
//! patient staging.
//!
//! The crate has four layers:
//!
//! * [`tensor`] — a small dense-tensor engine with reverse-mode automatic
//!   differentiation and an Adam optimizer, generic over the scalar type.
//! * [`sim`] — deterministic synthetic-cohort generation with ground truth
//!   under nine generative frameworks.
//! * [`model`] — the two-branch transformer (biomarkers as tokens for
//!   sequencing, patients as tokens for staging) plus checkpoint I/O.
//! * [`train`] / [`eval`] — the multi-task training loop and all metrics
//!   and report formats.
//!
//! Numeric code is generic over [`scalar::Scalar`]; production paths use
//! the [`Real`] alias (f32) while tests instantiate f64 where a
//! finite-difference oracle needs the headroom.

pub mod dist;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod tensor;
pub mod train;

pub use error::Error;

/// Scalar type used by production training and inference.
pub type Real = f32;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;
