use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, ADAM_TEMPERATURE, SGD_TEMPERATURE};
use crate::nn::{Optimizer, TrainConfig};
use crate::selector::{warmup_rounds, SelectorKind, DEFAULT_GAMMA0};

/// Where the pooled training set and the test set come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        num_classes: usize,
        per_class_n: usize,
        dim: usize,
        spread: f64,
    },
    Idx {
        num_classes: usize,
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl DatasetSpec {
    pub fn num_classes(&self) -> usize {
        match self {
            DatasetSpec::Blobs { num_classes, .. } | DatasetSpec::Idx { num_classes, .. } => *num_classes,
        }
    }
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Blobs {
            num_classes: 10,
            per_class_n: 200,
            dim: 32,
            spread: 2.0,
        }
    }
}

fn default_gamma0() -> f64 {
    DEFAULT_GAMMA0
}
fn default_eval_every() -> usize {
    5
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_alphas() -> Vec<f64> {
    vec![0.001, 0.002, 0.005, 0.01, 0.5]
}

/// Everything that defines a simulation run apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Total clients `N`.
    pub num_clients: usize,
    /// Clients sampled per round `K`.
    pub clients_per_round: usize,
    /// Global rounds.
    pub rounds: usize,
    pub selector: SelectorKind,
    /// Starting value of the annealed exponent.
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    /// Clients probed by pow-d; defaults to all clients.
    #[serde(default)]
    pub pow_d: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Defaults to a temperature matched to the optimizer.
    #[serde(default)]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub dataset: DatasetSpec,
    /// One cohort of clients per concentration parameter.
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Hidden-layer widths of the classifier.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Halve the learning rate every 10 rounds.
    #[serde(default)]
    pub lr_decay: bool,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_clients: 50,
            clients_per_round: 5,
            rounds: 200,
            selector: SelectorKind::Hics,
            gamma0: DEFAULT_GAMMA0,
            pow_d: None,
            train: TrainConfig::default(),
            estimator: None,
            cluster: ClusterConfig::default(),
            dataset: DatasetSpec::default(),
            alphas: default_alphas(),
            hidden: default_hidden(),
            eval_every: default_eval_every(),
            lr_decay: false,
            seeds: default_seeds(),
        }
    }
}

/// Model size above which clustered sampling compares bias updates only.
pub const CS_FULL_UPDATE_LIMIT: usize = 100_000;

impl ExperimentConfig {
    /// Collect every violated constraint; `Ok` only if there are none.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let n = self.num_clients;
        let k = self.clients_per_round;
        if n == 0 {
            problems.push("num_clients must be at least 1".to_string());
        }
        if k == 0 || k > n {
            problems.push(format!("clients_per_round must be in 1..=num_clients, got {k}"));
        }
        if let Some(m) = self.cluster.num_clusters {
            if m == 0 || m > n {
                problems.push(format!("cluster.num_clusters must be in 1..=num_clients, got {m}"));
            }
        }
        if !(0.0..=1.0).contains(&self.cluster.lambda) {
            problems.push(format!("cluster.lambda must lie in [0, 1], got {}", self.cluster.lambda));
        }
        if k > 0 && self.selector.uses_warmup() && self.rounds < warmup_rounds(n, k) {
            problems.push(format!(
                "rounds ({}) must cover the {} warm-up rounds",
                self.rounds,
                warmup_rounds(n, k)
            ));
        }
        if let Some(d) = self.pow_d {
            if d < k || d > n {
                problems.push(format!("pow_d must be in clients_per_round..=num_clients, got {d}"));
            }
        }
        if !self.gamma0.is_finite() || self.gamma0 < 0.0 {
            problems.push(format!("gamma0 must be finite and non-negative, got {}", self.gamma0));
        }
        if let Err(e) = self.train.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.estimator().validate() {
            problems.push(e.to_string());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            problems.push("alphas must be a non-empty list of positive numbers".to_string());
        }
        if self.alphas.len() > n {
            problems.push(format!("{} cohorts need at least as many clients", self.alphas.len()));
        }
        if self.hidden.contains(&0) {
            problems.push("hidden layer widths must be positive".to_string());
        }
        if self.eval_every == 0 {
            problems.push("eval_every must be at least 1".to_string());
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required".to_string());
        }
        match &self.dataset {
            DatasetSpec::Blobs {
                num_classes,
                per_class_n,
                dim,
                spread,
            } => {
                if *num_classes < 2 || *dim < 2 || *per_class_n == 0 || !(*spread > 0.0) {
                    problems.push("blobs need num_classes >= 2, dim >= 2, per_class_n >= 1, spread > 0".to_string());
                } else if num_classes * per_class_n < n {
                    problems.push(format!(
                        "{} samples cannot give each of {n} clients at least one",
                        num_classes * per_class_n
                    ));
                }
            }
            DatasetSpec::Idx { num_classes, .. } => {
                if *num_classes < 2 {
                    problems.push("idx datasets need num_classes >= 2".to_string());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster.num_clusters.unwrap_or(self.clients_per_round)
    }

    pub fn pow_d(&self) -> usize {
        self.pow_d.unwrap_or(self.num_clients)
    }

    pub fn estimator(&self) -> EstimatorConfig {
        self.estimator.unwrap_or(EstimatorConfig {
            temperature: match self.train.optimizer {
                Optimizer::Adam { .. } => ADAM_TEMPERATURE,
                _ => SGD_TEMPERATURE,
            },
        })
    }

    pub fn num_classes(&self) -> usize {
        self.dataset.num_classes()
    }

    /// Learning rate in round `t` (1-based).
    pub fn learning_rate(&self, t: usize) -> f64 {
        if self.lr_decay {
            self.train.learning_rate * 0.5f64.powi(((t.max(1) - 1) / 10) as i32)
        } else {
            self.train.learning_rate
        }
    }

    pub fn warmup_rounds(&self) -> usize {
        warmup_rounds(self.num_clients, self.clients_per_round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.num_clusters(), 5);
        assert_eq!(cfg.estimator().temperature, SGD_TEMPERATURE);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"num_clients": 10, "clients_per_round": 2, "rounds": 5, "selector": "random"}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.eval_every, 5);
        assert_eq!(cfg.seeds, vec![0]);
    }

    #[test]
    fn reports_every_problem() {
        let cfg = ExperimentConfig {
            clients_per_round: 60,
            rounds: 1,
            eval_every: 0,
            ..ExperimentConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("clients_per_round") && msg.contains("eval_every"), "{msg}");
        let cfg = ExperimentConfig {
            rounds: 9,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn adam_temperature_and_decay() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.optimizer = Optimizer::adam();
        assert_eq!(cfg.estimator().temperature, ADAM_TEMPERATURE);
        cfg.lr_decay = true;
        cfg.train.learning_rate = 0.8;
        assert_eq!(cfg.learning_rate(10), 0.8);
        assert_eq!(cfg.learning_rate(11), 0.4);
        assert_eq!(cfg.learning_rate(25), 0.2);
    }
}
