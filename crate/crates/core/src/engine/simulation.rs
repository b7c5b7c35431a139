use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig, CS_FULL_UPDATE_LIMIT};
use super::metrics::{evaluate, mean_std, system_heterogeneity, RoundMetrics};
use crate::cluster::{annotate_means, distance_matrix, ward_cluster, ClusterAssignment};
use crate::data::{dirichlet_partition, generate_blobs, idx, Dataset, LabelDistribution, PartitionSpec};
use crate::error::{Error, Result};
use crate::estimator::{estimate_entropy, BiasCache};
use crate::nn::{full_gradient, local_update, mean_loss, LocalUpdate, MlpModel, TrainConfig};
use crate::rng::{stream_rng, stream_seed, Stream};
use crate::selector::{
    gamma_schedule, hics_policy, is_valid_selection, select_cs, select_divfl, select_hics, select_powd, select_random,
    HicsPolicy, SelectionCost, SelectorKind, WarmupPool,
};

/// Pooled training data, its partition and the test set of one run.
#[derive(Debug, Clone)]
pub struct Federation {
    pub pooled: Dataset,
    pub test: Dataset,
    pub clients: Vec<Dataset>,
    /// Cohort index per client.
    pub cohorts: Vec<usize>,
}

impl Federation {
    /// Build the data for `cfg` under `seed`; the same seed gives the same
    /// clients whatever the selector.
    pub fn build(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let (pooled, test) = match &cfg.dataset {
            DatasetSpec::Blobs {
                num_classes,
                per_class_n,
                dim,
                spread,
            } => {
                let blobs = generate_blobs(
                    *num_classes,
                    *per_class_n,
                    *dim,
                    *spread,
                    stream_seed(seed, Stream::Data, 0, 0),
                )?;
                (blobs.train, blobs.test)
            }
            DatasetSpec::Idx {
                num_classes,
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => (
                idx::load_idx(train_images, train_labels, *num_classes)?,
                idx::load_idx(test_images, test_labels, *num_classes)?,
            ),
        };
        let spec = PartitionSpec {
            num_clients: cfg.num_clients,
            alphas: cfg.alphas.clone(),
            seed: stream_seed(seed, Stream::Data, 1, 0),
        };
        let part = dirichlet_partition(&pooled, &spec)?;
        Ok(Self {
            pooled,
            test,
            clients: part.clients,
            cohorts: part.cohorts,
        })
    }

    pub fn distributions(&self) -> Result<Vec<LabelDistribution>> {
        self.clients.iter().map(Dataset::label_distribution).collect()
    }

    /// `p_k = |B_k| / sum_i |B_i|`.
    pub fn weights(&self) -> Vec<f64> {
        let total: usize = self.clients.iter().map(Dataset::len).sum();
        self.clients.iter().map(|c| c.len() as f64 / total as f64).collect()
    }
}

/// Running totals of selection cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTotals {
    /// Largest per-client vector length read by the selector.
    pub vector_dim: usize,
    pub floats_touched: u64,
    /// Rounds in which the selector did any scoring.
    pub scored_rounds: usize,
}

/// State of one federated run.
pub struct Simulation {
    cfg: ExperimentConfig,
    seed: u64,
    fed: Federation,
    dists: Vec<LabelDistribution>,
    weights: Vec<f64>,
    model: MlpModel,
    cache: BiasCache,
    /// Latest full (or bias-only) update per client for clustered sampling.
    cs_updates: Vec<Option<Vec<f64>>>,
    cs_full: bool,
    warmup: WarmupPool,
    round: usize,
    cost: CostTotals,
    last_policy: Option<(ClusterAssignment, HicsPolicy)>,
}

impl Simulation {
    pub fn new(cfg: ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let fed = Federation::build(&cfg, seed)?;
        Self::with_federation(cfg, seed, fed)
    }

    pub fn with_federation(cfg: ExperimentConfig, seed: u64, fed: Federation) -> Result<Self> {
        cfg.validate()?;
        if fed.clients.len() != cfg.num_clients {
            return Err(Error::config(format!(
                "federation has {} clients, config {}",
                fed.clients.len(),
                cfg.num_clients
            )));
        }
        let mut dims = vec![fed.pooled.dim()];
        dims.extend(&cfg.hidden);
        dims.push(cfg.num_classes());
        let model = MlpModel::init(&dims, &mut stream_rng(seed, Stream::Init, 0, 0))?;
        let dists = fed.distributions()?;
        let weights = fed.weights();
        let n = cfg.num_clients;
        let cs_full = model.num_params() <= CS_FULL_UPDATE_LIMIT;
        Ok(Self {
            cache: BiasCache::new(n),
            cs_updates: vec![None; n],
            cs_full,
            warmup: WarmupPool::new(n),
            round: 0,
            cost: CostTotals::default(),
            last_policy: None,
            cfg,
            seed,
            fed,
            dists,
            weights,
            model,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn federation(&self) -> &Federation {
        &self.fed
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn set_model(&mut self, model: MlpModel) {
        self.model = model;
    }

    pub fn cache(&self) -> &BiasCache {
        &self.cache
    }

    pub fn distributions(&self) -> &[LabelDistribution] {
        &self.dists
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Last completed round (0 before the first).
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn cost(&self) -> CostTotals {
        self.cost
    }

    /// Whether clustered sampling compares full update vectors.
    pub fn cs_full_updates(&self) -> bool {
        self.cs_full
    }

    /// Clusters and policy of the latest heterogeneity-guided selection.
    pub fn last_policy(&self) -> Option<&(ClusterAssignment, HicsPolicy)> {
        self.last_policy.as_ref()
    }

    /// Estimated entropy per client from the cached bias updates.
    pub fn estimated_entropies(&self) -> Result<Vec<f64>> {
        let est = self.cfg.estimator();
        Ok(self
            .cache
            .complete_records()?
            .iter()
            .map(|r| estimate_entropy(&r.delta_b, &est))
            .collect())
    }

    fn in_warmup(&self, t: usize) -> bool {
        self.cfg.selector.uses_warmup() && t <= self.cfg.warmup_rounds() && !self.warmup.is_exhausted()
    }

    fn select(&mut self, t: usize) -> Result<(Vec<usize>, Option<f64>)> {
        let k = self.cfg.clients_per_round;
        let n = self.cfg.num_clients;
        let mut rng = stream_rng(self.seed, Stream::Select, t as u64, 0);
        let gamma = gamma_schedule(t, self.cfg.rounds, self.cfg.gamma0);
        let gamma_out = (self.cfg.selector == SelectorKind::Hics).then_some(gamma);
        if self.in_warmup(t) {
            return Ok((self.warmup.draw(k, &mut rng), gamma_out));
        }
        let chosen = match self.cfg.selector {
            SelectorKind::Random => select_random(k, &self.weights, &mut rng)?,
            SelectorKind::Hics => {
                let est = self.cfg.estimator();
                let records = self.cache.complete_records()?;
                let updates: Vec<&[f64]> = records.iter().map(|r| r.delta_b.as_slice()).collect();
                let h: Vec<f64> = updates.iter().map(|db| estimate_entropy(db, &est)).collect();
                let dist = distance_matrix(&updates, &h, self.cfg.cluster.lambda);
                let assignment = annotate_means(ward_cluster(&dist, self.cfg.num_clusters())?, &h);
                let policy = hics_policy(&assignment, gamma, &self.weights)?;
                let chosen = select_hics(&policy, &assignment, k, &mut rng);
                let c = self.model.num_classes();
                // entropies read every bias vector once, distances read each pair
                self.charge(SelectionCost::new(c, (n * c + n * (n - 1) * c) as u64));
                self.last_policy = Some((assignment, policy));
                chosen
            }
            SelectorKind::PowD => {
                let d = self.cfg.pow_d();
                let candidates = if d >= n {
                    (0..n).collect()
                } else {
                    select_random(d, &self.weights, &mut rng)?
                };
                let losses: Vec<f64> = candidates
                    .par_iter()
                    .map(|&c| mean_loss(&self.model, &self.fed.clients[c]))
                    .collect::<Result<_>>()?;
                let p = self.model.num_params();
                let samples: usize = candidates.iter().map(|&c| self.fed.clients[c].len()).sum();
                self.charge(SelectionCost::new(p, (samples * p) as u64));
                select_powd(&candidates, &losses, k)
            }
            SelectorKind::ClusteredSampling => {
                let updates: Vec<&[f64]> = self
                    .cs_updates
                    .iter()
                    .enumerate()
                    .map(|(c, u)| {
                        u.as_deref()
                            .ok_or_else(|| Error::Invariant(format!("client {c} has no stored update")))
                    })
                    .collect::<Result<_>>()?;
                let (chosen, cost) = select_cs(&updates, k, &self.weights, &mut rng)?;
                self.charge(cost);
                chosen
            }
            SelectorKind::DivFl => {
                let grads: Vec<Vec<f64>> = self
                    .fed
                    .clients
                    .par_iter()
                    .map(|ds| full_gradient(&self.model, ds).map(|g| g.0))
                    .collect::<Result<_>>()?;
                let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
                let (chosen, cost) = select_divfl(&refs, k);
                self.charge(cost);
                chosen
            }
        };
        Ok((chosen, gamma_out))
    }

    fn charge(&mut self, cost: SelectionCost) {
        self.cost.vector_dim = self.cost.vector_dim.max(cost.vector_dim);
        self.cost.floats_touched += cost.floats_touched;
        self.cost.scored_rounds += 1;
    }

    /// Train the given clients from the current global model in round `t`.
    /// Results are in ascending client-id order.
    pub fn local_updates(&self, t: usize, clients: &[usize]) -> Result<Vec<(usize, LocalUpdate)>> {
        let train = TrainConfig {
            learning_rate: self.cfg.learning_rate(t),
            ..self.cfg.train
        };
        let mut ids = clients.to_vec();
        ids.sort_unstable();
        ids.par_iter()
            .map(|&c| {
                let seed = stream_seed(self.seed, Stream::LocalTrain, t as u64, c as u64);
                local_update(&self.model, &self.fed.clients[c], &train, seed).map(|u| (c, u))
            })
            .collect()
    }

    /// Run round `round() + 1`.
    pub fn step(&mut self) -> Result<RoundMetrics> {
        let t = self.round + 1;
        let started = Instant::now();
        let (selected, gamma_t) = self.select(t)?;
        let expected = if self.in_warmup_round_size(t) {
            selected.len()
        } else {
            self.cfg.clients_per_round.min(self.cfg.num_clients)
        };
        if selected.is_empty() || !is_valid_selection(&selected, expected, self.cfg.num_clients) {
            return Err(Error::Invariant(format!(
                "round {t}: selector {} returned an invalid client set {selected:?}",
                self.cfg.selector
            )));
        }
        let updates = self.local_updates(t, &selected)?;
        self.model = aggregate(&self.model, updates.iter().map(|(_, u)| u))?;
        for (c, u) in &updates {
            self.cache.update(*c, u.delta_b.clone(), t)?;
            if self.cfg.selector == SelectorKind::ClusteredSampling {
                self.cs_updates[*c] = Some(if self.cs_full {
                    u.delta_theta.clone()
                } else {
                    u.delta_b.clone()
                });
            }
        }
        let losses: Vec<f64> = updates.iter().map(|(_, u)| u.train_loss).collect();
        let (avg, std) = mean_std(&losses);
        let sel_dists: Vec<LabelDistribution> = selected.iter().map(|&c| self.dists[c].clone()).collect();
        let h_m = system_heterogeneity(&sel_dists, &vec![1.0; selected.len()], 1.0);
        let (acc, loss) = if t % self.cfg.eval_every == 0 || t == self.cfg.rounds {
            let (a, l) = evaluate(&self.model, &self.fed.test)?;
            (Some(a), Some(l))
        } else {
            (None, None)
        };
        self.round = t;
        Ok(RoundMetrics {
            round: t,
            selector: self.cfg.selector,
            selected_ids: selected,
            avg_train_loss: avg,
            std_train_loss: std,
            test_accuracy: acc,
            test_loss: loss,
            h_m_diag: h_m,
            gamma_t,
            wall_time: started.elapsed().as_secs_f64(),
        })
    }

    /// Warm-up rounds may return fewer than `K` clients at the end of the sweep.
    fn in_warmup_round_size(&self, t: usize) -> bool {
        self.cfg.selector.uses_warmup() && t <= self.cfg.warmup_rounds()
    }

    /// Run all remaining rounds.
    pub fn run(&mut self) -> Result<Vec<RoundMetrics>> {
        let mut rows = Vec::with_capacity(self.cfg.rounds.saturating_sub(self.round));
        while self.round < self.cfg.rounds {
            rows.push(self.step()?);
        }
        Ok(rows)
    }
}

/// Unweighted mean of the local models `theta + delta_k`, summed in the
/// given order.
pub fn aggregate<'a>(global: &MlpModel, updates: impl Iterator<Item = &'a LocalUpdate>) -> Result<MlpModel> {
    let mut sum = vec![0.0; global.num_params()];
    let mut count = 0usize;
    for u in updates {
        for ((s, p), d) in sum.iter_mut().zip(global.params()).zip(&u.delta_theta) {
            *s += p + d;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Invariant("no local models to aggregate".into()));
    }
    let params = sum.into_iter().map(|s| s / count as f64).collect();
    MlpModel::from_params(global.dims(), params)
}
