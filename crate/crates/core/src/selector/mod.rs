//! Client selection: heterogeneity-guided clustered sampling with annealing,
//! the warm-up sweep, and the random, pow-d, clustered-sampling and DivFL
//! baselines.

mod baselines;
mod hics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use baselines::{select_cs, select_divfl, select_powd, select_random, select_random_uniform};
pub use hics::{
    draw_client, first_draw_probs, gamma_schedule, hics_policy, select_hics, warmup_rounds, HicsPolicy, WarmupPool, DEFAULT_GAMMA0,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Hics,
    Random,
    PowD,
    ClusteredSampling,
    DivFl,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 5] = [
        SelectorKind::Hics,
        SelectorKind::Random,
        SelectorKind::PowD,
        SelectorKind::ClusteredSampling,
        SelectorKind::DivFl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::Hics => "hics",
            SelectorKind::Random => "random",
            SelectorKind::PowD => "pow_d",
            SelectorKind::ClusteredSampling => "clustered_sampling",
            SelectorKind::DivFl => "div_fl",
        }
    }

    /// Whether this selector starts with the replacement-free warm-up sweep.
    pub fn uses_warmup(self) -> bool {
        matches!(self, SelectorKind::Hics | SelectorKind::ClusteredSampling)
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "hics" | "hics_fl" => Ok(SelectorKind::Hics),
            "random" => Ok(SelectorKind::Random),
            "pow_d" | "powd" => Ok(SelectorKind::PowD),
            "clustered_sampling" | "cs" => Ok(SelectorKind::ClusteredSampling),
            "div_fl" | "divfl" => Ok(SelectorKind::DivFl),
            _ => Err(Error::config(format!(
                "unknown selector '{s}' (expected hics, random, pow_d, clustered_sampling or div_fl)"
            ))),
        }
    }
}

/// Extra server-side computation spent on one selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCost {
    /// Length of the per-client vectors the selector reads.
    pub vector_dim: usize,
    /// Floating-point values read while scoring clients.
    pub floats_touched: u64,
}

impl SelectionCost {
    pub fn new(vector_dim: usize, floats_touched: u64) -> Self {
        Self {
            vector_dim,
            floats_touched,
        }
    }

    pub fn merge(&mut self, other: SelectionCost) {
        self.vector_dim = self.vector_dim.max(other.vector_dim);
        self.floats_touched += other.floats_touched;
    }
}

/// `true` when `ids` holds exactly `expected` distinct values below `n`.
pub fn is_valid_selection(ids: &[usize], expected: usize, n: usize) -> bool {
    let mut seen = vec![false; n];
    ids.len() == expected
        && ids.iter().all(|&k| {
            let fresh = k < n && !seen[k];
            if fresh {
                seen[k] = true;
            }
            fresh
        })
}
