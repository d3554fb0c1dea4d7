//! Bayesian active-learning engine.
//!
//! A small MC-dropout CNN trained from scratch each round, plus pool-based
//! acquisition (max-entropy, mean-std, BALD, random) and the round loop that
//! ties them together. Everything is f64 and deterministic under a fixed seed.

pub mod acquisition;
pub mod adam;
pub mod al;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Additive guard inside every logarithm, so saturated probabilities never
/// produce infinities. Entropies and losses are reported in nats.
pub const LOG_EPS: f64 = 1e-12;
