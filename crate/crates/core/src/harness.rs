//! Simulation-backed validation runs: estimator rank fidelity, the
//! gradient-gap scatter with its envelope, and cohort separation by clustering.

use serde::{Deserialize, Serialize};

use crate::cluster::{distance_matrix, purity, ward_cluster};
use crate::engine::{ExperimentConfig, Simulation};
use crate::error::{Error, Result};
use crate::estimator::{assumption_scatter, fit_envelope, EnvelopeFit, ScatterPoint};
use crate::selector::SelectorKind;
use crate::stats::spearman;

/// True and estimated entropy of one client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub client_id: usize,
    pub true_entropy: f64,
    pub estimated_entropy: f64,
    /// Round in which the client's bias update was recorded.
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankFidelity {
    pub rows: Vec<EntropyRow>,
    pub spearman: f64,
}

/// Run the warm-up sweep of the heterogeneity-guided selector and compare
/// each client's estimated entropy with its true label entropy.
pub fn rank_fidelity(cfg: &ExperimentConfig, seed: u64) -> Result<RankFidelity> {
    let cfg = ExperimentConfig {
        selector: SelectorKind::Hics,
        ..cfg.clone()
    };
    let mut sim = Simulation::new(cfg, seed)?;
    while !sim.cache().is_complete() {
        sim.step()?;
    }
    let est = sim.estimated_entropies()?;
    let rows: Vec<EntropyRow> = est
        .iter()
        .enumerate()
        .map(|(k, &h)| EntropyRow {
            client_id: k,
            true_entropy: sim.distributions()[k].entropy,
            estimated_entropy: h,
            round: sim.cache().get(k).map_or(0, |r| r.last_updated_round),
        })
        .collect();
    let truth: Vec<f64> = rows.iter().map(|r| r.true_entropy).collect();
    let rho = spearman(&truth, &est);
    Ok(RankFidelity { rows, spearman: rho })
}

/// `count` values spaced evenly in log scale over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub points: Vec<ScatterPoint>,
    pub fit: EnvelopeFit,
    /// Spearman correlation between entropy and gap over client points.
    pub spearman: f64,
    pub target_coverage: f64,
}

/// Train with full participation and, before each probed round, record the
/// entropy/gap point of every client plus the pooled super-client `(ln C, 0)`.
pub fn assumption_harness(
    cfg: &ExperimentConfig,
    seed: u64,
    probe_rounds: &[usize],
    target_coverage: f64,
) -> Result<AssumptionReport> {
    if probe_rounds.is_empty() {
        return Err(Error::config("at least one probe round is required"));
    }
    let cfg = ExperimentConfig {
        clients_per_round: cfg.num_clients,
        selector: SelectorKind::Random,
        rounds: cfg.rounds.max(*probe_rounds.iter().max().unwrap_or(&1)),
        ..cfg.clone()
    };
    let mut sim = Simulation::new(cfg, seed)?;
    let eta = sim.config().train.learning_rate;
    let c = sim.config().num_classes();
    let mut points = Vec::new();
    let last = *probe_rounds.iter().max().expect("non-empty");
    for t in 1..=last {
        if probe_rounds.contains(&t) {
            let fed = sim.federation();
            let mut pts = assumption_scatter(&fed.clients, &fed.pooled, sim.model(), eta, t)?;
            let pooled_h = fed.pooled.label_distribution()?.entropy;
            pts.push(ScatterPoint {
                client_id: None,
                round: t,
                entropy: pooled_h,
                gap: 0.0,
            });
            points.extend(pts);
        }
        if t < last {
            sim.step()?;
        }
    }
    let fit = fit_envelope(&points, c, target_coverage)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.client_id.is_some())
        .map(|p| (p.entropy, p.gap))
        .unzip();
    Ok(AssumptionReport {
        points,
        fit,
        spearman: spearman(&xs, &ys),
        target_coverage,
    })
}

/// Default setting for the gradient-gap scatter: 10 log-spaced concentrations
/// in `[0.01, 50]` with 5 clients each.
pub fn assumption_config() -> ExperimentConfig {
    ExperimentConfig {
        num_clients: 50,
        clients_per_round: 50,
        rounds: 20,
        alphas: log_spaced(0.01, 50.0, 10),
        ..ExperimentConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub groups: Vec<Vec<usize>>,
    pub purity: f64,
}

/// Give every client one round of local training, then cluster the bias
/// updates with the configured distance into `M` groups and score the
/// groups against the partition cohorts.
pub fn cluster_separation(cfg: &ExperimentConfig, seed: u64) -> Result<SeparationReport> {
    let cfg = ExperimentConfig {
        selector: SelectorKind::Hics,
        ..cfg.clone()
    };
    let mut sim = Simulation::new(cfg, seed)?;
    while !sim.cache().is_complete() {
        sim.step()?;
    }
    let h = sim.estimated_entropies()?;
    let records = sim.cache().complete_records()?;
    let updates: Vec<&[f64]> = records.iter().map(|r| r.delta_b.as_slice()).collect();
    let dist = distance_matrix(&updates, &h, sim.config().cluster.lambda);
    let assignment = ward_cluster(&dist, sim.config().num_clusters())?;
    let p = purity(&assignment, &sim.federation().cohorts);
    Ok(SeparationReport {
        groups: assignment.groups,
        purity: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_spaced(0.01, 50.0, 10);
        assert_eq!(g.len(), 10);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[9] - 50.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
