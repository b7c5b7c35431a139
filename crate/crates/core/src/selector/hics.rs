use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

pub const DEFAULT_GAMMA0: f64 = 4.0;

/// `gamma0 (1 - t / total)`, clamped to the schedule's range.
pub fn gamma_schedule(t: usize, total: usize, gamma0: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    gamma0 * (1.0 - t.min(total) as f64 / total as f64)
}

/// Two-stage sampling distribution: a group, then a member of that group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HicsPolicy {
    pub gamma: f64,
    /// Group probabilities, `pi_m ∝ exp(gamma * mean_entropy_m)`.
    pub pi: Vec<f64>,
    /// Member probabilities per group, aligned with `assignment.groups[m]`.
    pub within: Vec<Vec<f64>>,
}

pub fn hics_policy(assignment: &ClusterAssignment, gamma: f64, weights: &[f64]) -> Result<HicsPolicy> {
    if assignment.mean_entropy.len() != assignment.groups.len() {
        return Err(Error::Invariant("cluster assignment has no mean entropies".into()));
    }
    let logits: Vec<f64> = assignment.mean_entropy.iter().map(|h| gamma * h).collect();
    let pi = crate::nn::softmax(&logits);
    let within = assignment
        .groups
        .iter()
        .map(|g| {
            let w: Vec<f64> = g.iter().map(|&k| weights[k]).collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                w.iter().map(|v| v / total).collect()
            } else {
                vec![1.0 / g.len() as f64; g.len()]
            }
        })
        .collect();
    Ok(HicsPolicy { gamma, pi, within })
}

/// Probability that the first draw picks each client: `sum_m pi_m p~_{m,k}`.
pub fn first_draw_probs(policy: &HicsPolicy, assignment: &ClusterAssignment) -> Vec<f64> {
    let mut omega = vec![0.0; assignment.num_clients()];
    for ((g, w), pi) in assignment.groups.iter().zip(&policy.within).zip(&policy.pi) {
        for (&k, p) in g.iter().zip(w) {
            omega[k] += pi * p;
        }
    }
    omega
}

/// Draw a group from `pi`, then a client from that group.
pub fn draw_client<R: Rng + ?Sized>(policy: &HicsPolicy, assignment: &ClusterAssignment, rng: &mut R) -> usize {
    let m = WeightedIndex::new(&policy.pi).expect("valid group distribution").sample(rng);
    let j = WeightedIndex::new(&policy.within[m])
        .expect("valid member distribution")
        .sample(rng);
    assignment.groups[m][j]
}

/// `min(k, N)` distinct clients by repeated two-stage draws. Repeats are
/// discarded; after `10 K M` draws the rest are filled by largest first-draw
/// probability (lowest id on ties).
pub fn select_hics<R: Rng + ?Sized>(
    policy: &HicsPolicy,
    assignment: &ClusterAssignment,
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = assignment.num_clients();
    let k = k.min(n);
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let cap = 10 * k * assignment.groups.len();
    for _ in 0..cap {
        if chosen.len() == k {
            break;
        }
        let c = draw_client(policy, assignment, rng);
        if !taken[c] {
            taken[c] = true;
            chosen.push(c);
        }
    }
    if chosen.len() < k {
        let omega = first_draw_probs(policy, assignment);
        let mut rest: Vec<usize> = (0..n).filter(|&c| !taken[c]).collect();
        rest.sort_by(|&a, &b| omega[b].total_cmp(&omega[a]).then(a.cmp(&b)));
        chosen.extend(rest.into_iter().take(k - chosen.len()));
    }
    chosen
}

/// Number of warm-up rounds, `ceil(N / K)`.
pub fn warmup_rounds(num_clients: usize, k: usize) -> usize {
    num_clients.div_ceil(k.max(1))
}

/// Clients not yet visited during warm-up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarmupPool {
    remaining: Vec<usize>,
}

impl WarmupPool {
    pub fn new(num_clients: usize) -> Self {
        Self {
            remaining: (0..num_clients).collect(),
        }
    }

    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining.is_empty()
    }

    /// Uniformly draw `min(k, remaining)` clients and remove them from the pool.
    pub fn draw<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Vec<usize> {
        let amount = k.min(self.remaining.len());
        let picks = rand::seq::index::sample(rng, self.remaining.len(), amount);
        let chosen: Vec<usize> = picks.iter().map(|i| self.remaining[i]).collect();
        self.remaining.retain(|c| !chosen.contains(c));
        chosen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::annotate_means;
    use crate::rng::seeded;

    fn assignment(groups: Vec<Vec<usize>>, h: &[f64]) -> ClusterAssignment {
        annotate_means(
            ClusterAssignment {
                groups,
                mean_entropy: vec![],
            },
            h,
        )
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(gamma_schedule(0, 100, 4.0), 4.0);
        assert_eq!(gamma_schedule(100, 100, 4.0), 0.0);
        assert_eq!(gamma_schedule(50, 100, 4.0), 2.0);
    }

    #[test]
    fn policy_examples() {
        let a = assignment(vec![vec![0], vec![1]], &[2f64.ln(), 0.0]);
        let p = hics_policy(&a, 1.0, &[1.0, 1.0]).unwrap();
        assert!((p.pi[0] - 2.0 / 3.0).abs() < 1e-12 && (p.pi[1] - 1.0 / 3.0).abs() < 1e-12);
        let p = hics_policy(&a, 0.0, &[1.0, 1.0]).unwrap();
        assert_eq!(p.pi, vec![0.5, 0.5]);
        let a = assignment(vec![vec![0, 2], vec![1]], &[0.3, 0.3, 0.3]);
        let p = hics_policy(&a, 7.0, &[1.0, 1.0, 3.0]).unwrap();
        assert!((p.pi[0] - 0.5).abs() < 1e-12);
        assert_eq!(p.within[0], vec![0.25, 0.75]);
        let omega = first_draw_probs(&p, &a);
        assert!((omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((omega[2] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn selects_all_when_k_equals_n() {
        let a = assignment(vec![vec![0, 1], vec![2, 3, 4]], &[0.0, 0.1, 2.0, 2.1, 2.2]);
        let p = hics_policy(&a, 50.0, &[1.0; 5]).unwrap();
        let mut s = select_hics(&p, &a, 5, &mut seeded(0));
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dominant_cluster_takes_everything() {
        let a = assignment(vec![vec![0, 1], vec![2, 3, 4, 5]], &[0.0, 0.0, 2.0, 2.0, 2.0, 2.0]);
        let p = hics_policy(&a, 1e3, &[1.0; 6]).unwrap();
        for seed in 0..20 {
            let s = select_hics(&p, &a, 3, &mut seeded(seed));
            assert!(s.iter().all(|&c| c >= 2));
        }
    }

    #[test]
    fn draw_cap_falls_back_to_omega_order() {
        // all mass on one singleton group; the cap forces the fill
        let a = assignment(vec![vec![0], vec![1], vec![2]], &[5.0, 0.0, 0.1]);
        let p = hics_policy(&a, 100.0, &[1.0; 3]).unwrap();
        assert!(p.pi[2] > p.pi[1] && p.pi[1] > 0.0);
        let s = select_hics(&p, &a, 3, &mut seeded(4));
        assert_eq!(s, vec![0, 2, 1]);
    }

    #[test]
    fn warmup_covers_everyone_once() {
        assert_eq!(warmup_rounds(50, 5), 10);
        assert_eq!(warmup_rounds(52, 5), 11);
        let mut pool = WarmupPool::new(52);
        let mut rng = seeded(1);
        let mut seen = Vec::new();
        for r in 0..11 {
            let got = pool.draw(5, &mut rng);
            assert_eq!(got.len(), if r == 10 { 2 } else { 5 });
            seen.extend(got);
        }
        assert!(pool.is_exhausted());
        seen.sort_unstable();
        assert_eq!(seen, (0..52).collect::<Vec<_>>());
        let mut small = WarmupPool::new(3);
        assert_eq!(small.draw(5, &mut rng).len(), 3);
    }
}
