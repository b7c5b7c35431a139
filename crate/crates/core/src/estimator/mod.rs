//! Heterogeneity estimation from output-layer bias updates, the quantities of
//! the entropy lower bound, and the gradient-gap envelope harness.

mod envelope;
mod theory;

use serde::{Deserialize, Serialize};

use crate::data::entropy;
use crate::error::{Error, Result};
use crate::nn::softmax;

pub use envelope::{assumption_scatter, envelope_coverage, fit_envelope, EnvelopeFit, EnvelopeParams, ScatterPoint};
pub use theory::{confusion_averages, expected_bias_update, theorem1_rhs, ConfusionAverages};

/// Temperature used with plain and momentum SGD.
pub const SGD_TEMPERATURE: f64 = 0.0025;
/// Temperature used with Adam.
pub const ADAM_TEMPERATURE: f64 = 0.0015;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub temperature: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            temperature: SGD_TEMPERATURE,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Entropy of `softmax(delta_b / T)`.
pub fn estimate_entropy(delta_b: &[f64], cfg: &EstimatorConfig) -> f64 {
    let scaled: Vec<f64> = delta_b.iter().map(|v| v / cfg.temperature).collect();
    entropy(&softmax(&scaled))
}

/// Most recent bias update of one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasUpdateRecord {
    pub client_id: usize,
    pub delta_b: Vec<f64>,
    pub last_updated_round: usize,
}

/// Server-side store of the latest `delta_b` per client. Entries are
/// overwritten only when a client is selected and used as-is however old.
#[derive(Debug, Clone, Default)]
pub struct BiasCache {
    records: Vec<Option<BiasUpdateRecord>>,
}

impl BiasCache {
    pub fn new(num_clients: usize) -> Self {
        Self {
            records: vec![None; num_clients],
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn update(&mut self, client_id: usize, delta_b: Vec<f64>, round: usize) -> Result<()> {
        if delta_b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite bias update for client {client_id}")));
        }
        let slot = self
            .records
            .get_mut(client_id)
            .ok_or_else(|| Error::Invariant(format!("client {client_id} outside the cache")))?;
        *slot = Some(BiasUpdateRecord {
            client_id,
            delta_b,
            last_updated_round: round,
        });
        Ok(())
    }

    pub fn get(&self, client_id: usize) -> Option<&BiasUpdateRecord> {
        self.records.get(client_id).and_then(Option::as_ref)
    }

    pub fn is_complete(&self) -> bool {
        self.records.iter().all(Option::is_some)
    }

    /// All records in client-id order; fails if any client has none yet.
    pub fn complete_records(&self) -> Result<Vec<&BiasUpdateRecord>> {
        self.records
            .iter()
            .enumerate()
            .map(|(k, r)| r.as_ref().ok_or_else(|| Error::Invariant(format!("client {k} has no bias update yet"))))
            .collect()
    }
}
