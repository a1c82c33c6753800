//! Event-triggered remote state estimation.
//!
//! A sensor observes a linear Gaussian system and transmits measurements only
//! when an innovation-based trigger fires; a remote estimator fuses the
//! transmitted measurements with the information carried by silence. The
//! crate provides:
//!
//! - [`model`]: the state-space model, ground-truth simulation, and the 2D
//!   constant-velocity benchmark;
//! - [`triggers`]: generalized Gaussian trigger weightings spanning fully
//!   stochastic to deterministic send decisions, with zero / send-on-delta /
//!   predicted send-on-delta implicit measurements;
//! - [`estimators`]: the event-based Kalman filter and a rejection-sampling
//!   estimator that stays consistent where the closed-form filter does not;
//! - [`oracle`]: a brute-force quadrature reference posterior and chi-square
//!   consistency bands for validating both estimators;
//! - [`metrics`] and [`harness`]: Monte-Carlo experiment orchestration with
//!   deterministic per-run RNG substreams;
//! - [`cli`]: the batch front end behind the `evestim` binary.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod harness;
mod linalg;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod triggers;

pub use error::{Error, Result};
