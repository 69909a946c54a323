//! Continuous-time error tracking for stabilizer codes under continuous
//! syndrome measurement.
//!
//! Syndrome measurement in white noise reduces to a hidden Markov model on
//! error states. This crate builds the error-state chains for the catalog
//! codes, propagates Wonham filters over them, cross-checks the filters
//! against the conditional density-matrix equation, and tracks a monotone
//! upper bound on the achievable recovery probability.

pub mod chain;
pub mod cli;
pub mod codes;
pub mod error;
pub mod metrics;
pub mod montecarlo;
pub mod pauli;
pub mod rng;
pub mod signal;
pub mod sme;
pub mod stats;
pub mod validation;
pub mod wonham;

pub use error::{Error, Result};
