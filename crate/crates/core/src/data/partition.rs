//! Dirichlet non-IID partitioning.
//!
//! Clients are split into one cohort per concentration parameter. The pooled
//! set is first dealt into equal per-class shares, one per cohort; inside a
//! cohort, each class is divided among the cohort's clients by a fresh
//! `Dir(alpha)` draw over clients, rounded with the largest-remainder rule so
//! per-class totals are preserved exactly.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub num_clients: usize,
    /// One entry per cohort; clients are split into `alphas.len()` equal cohorts.
    pub alphas: Vec<f64>,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::config("num_clients must be at least 1"));
        }
        if self.alphas.is_empty() {
            return Err(Error::config("at least one concentration parameter is required"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::domain(format!("concentration parameters must be positive, got {a}")));
        }
        if self.num_clients < self.alphas.len() {
            return Err(Error::config(format!(
                "{} clients cannot form {} cohorts",
                self.num_clients,
                self.alphas.len()
            )));
        }
        Ok(())
    }

    /// Cohort index of every client, in client-id order.
    pub fn cohorts(&self) -> Vec<usize> {
        cohort_sizes(self.num_clients, self.alphas.len())
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect()
    }
}

/// Split `n` into `parts` near-equal sizes, larger ones first.
fn cohort_sizes(n: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| n / parts + usize::from(i < n % parts)).collect()
}

/// One row of the partition export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub client_id: usize,
    pub class_counts: Vec<usize>,
    pub alpha_cohort: f64,
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub clients: Vec<Dataset>,
    /// Cohort index per client.
    pub cohorts: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl Partition {
    pub fn records(&self) -> Vec<PartitionRecord> {
        self.clients
            .iter()
            .enumerate()
            .map(|(k, ds)| PartitionRecord {
                client_id: k,
                class_counts: ds.class_counts().to_vec(),
                alpha_cohort: self.alphas[self.cohorts[k]],
            })
            .collect()
    }

    pub fn alpha_of(&self, client: usize) -> f64 {
        self.alphas[self.cohorts[client]]
    }
}

/// Draw from `Dir(alpha, ..., alpha)` with `n` components.
///
/// Gamma variates are handled in log space: for `alpha < 1` we use
/// `ln G(alpha) = ln G(alpha + 1) + ln(U) / alpha`, which does not underflow
/// even for `alpha = 1e-3`. If anything still goes non-finite, all mass goes
/// to one uniformly chosen component (the `alpha -> 0` limit).
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    assert!(alpha > 0.0 && n > 0);
    let log_gammas: Vec<f64> = if alpha >= 1.0 {
        let g = Gamma::new(alpha, 1.0).expect("positive shape");
        (0..n).map(|_| g.sample(rng).ln()).collect()
    } else {
        let g = Gamma::new(alpha + 1.0, 1.0).expect("positive shape");
        (0..n)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
                g.sample(rng).ln() + u.ln() / alpha
            })
            .collect()
    };
    let max = log_gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_gammas.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    if !max.is_finite() || !total.is_finite() || total <= 0.0 {
        let mut one_hot = vec![0.0; n];
        one_hot[rng.random_range(0..n)] = 1.0;
        return one_hot;
    }
    weights.into_iter().map(|w| w / total).collect()
}

/// Integer counts proportional to `shares` that sum exactly to `total`.
/// Leftover units go to the largest fractional parts, ties to the lower index.
pub fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    if sum <= 0.0 || shares.is_empty() {
        let mut out = vec![0; shares.len()];
        if let Some(first) = out.first_mut() {
            *first = total;
        }
        return out;
    }
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Partition `pooled` across `spec.num_clients` clients.
pub fn dirichlet_partition(pooled: &Dataset, spec: &PartitionSpec) -> Result<Partition> {
    spec.validate()?;
    let num_classes = pooled.num_classes();
    let mut rng = seeded(spec.seed);
    let sizes = cohort_sizes(spec.num_clients, spec.alphas.len());
    let cohorts = spec.cohorts();
    let first_client: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let start = *acc;
            *acc += s;
            Some(start)
        })
        .collect();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in pooled.labels().iter().enumerate() {
        by_class[y].push(i);
    }

    let cohort_weights: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    // assignment[k] = pooled indices owned by client k
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); spec.num_clients];
    for class_rows in by_class.iter_mut() {
        class_rows.shuffle(&mut rng);
        let per_cohort = largest_remainder(&cohort_weights, class_rows.len());
        let mut cursor = 0;
        for (c, &n_ci) in per_cohort.iter().enumerate() {
            let rows = &class_rows[cursor..cursor + n_ci];
            cursor += n_ci;
            let shares = sample_dirichlet(spec.alphas[c], sizes[c], &mut rng);
            let counts = largest_remainder(&shares, n_ci);
            let mut at = 0;
            for (j, &cnt) in counts.iter().enumerate() {
                assignment[first_client[c] + j].extend_from_slice(&rows[at..at + cnt]);
                at += cnt;
            }
        }
    }

    for (c, &size) in sizes.iter().enumerate() {
        let members = first_client[c]..first_client[c] + size;
        let available: usize = members.clone().map(|k| assignment[k].len()).sum();
        if available < size {
            return Err(Error::domain(format!(
                "cohort {c} received {available} samples for {size} clients"
            )));
        }
        repair_empty_clients(&mut assignment, members, pooled);
    }

    let clients = assignment
        .into_iter()
        .map(|mut rows| {
            rows.sort_unstable();
            pooled.subset(&rows)
        })
        .collect();
    Ok(Partition {
        clients,
        cohorts,
        alphas: spec.alphas.clone(),
    })
}

/// Move one sample into every empty client from the largest client of the
/// same cohort (lowest id on ties), taken from the donor's most common class.
fn repair_empty_clients(assignment: &mut [Vec<usize>], members: std::ops::Range<usize>, pooled: &Dataset) {
    while let Some(empty) = members.clone().find(|&k| assignment[k].is_empty()) {
        let donor = members
            .clone()
            .max_by(|&a, &b| assignment[a].len().cmp(&assignment[b].len()).then(b.cmp(&a)))
            .expect("non-empty cohort");
        let mut counts = vec![0usize; pooled.num_classes()];
        for &i in &assignment[donor] {
            counts[pooled.labels()[i]] += 1;
        }
        let top = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .expect("classes");
        let pos = assignment[donor]
            .iter()
            .rposition(|&i| pooled.labels()[i] == top)
            .expect("donor owns its top class");
        let row = assignment[donor].remove(pos);
        assignment[empty].push(row);
    }
}
