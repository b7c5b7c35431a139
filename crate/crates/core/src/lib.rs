//! Federated learning simulator with heterogeneity-guided client sampling.

pub mod cluster;
pub mod data;
pub mod engine;
pub mod error;
pub mod harness;
pub mod estimator;
pub mod nn;
pub mod rng;
pub mod selector;
pub mod stats;

pub use error::{Error, Result};
