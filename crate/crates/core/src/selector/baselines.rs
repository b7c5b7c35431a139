use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::SelectionCost;
use crate::cluster::{distance_matrix, ward_cluster};
use crate::error::{Error, Result};

/// `min(k, N)` clients drawn without replacement with probability
/// proportional to `weights`.
pub fn select_random<R: Rng + ?Sized>(k: usize, weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let amount = k.min(weights.len());
    let picked = rand::seq::index::sample_weighted(rng, weights.len(), |i| weights[i], amount)
        .map_err(|e| Error::config(format!("invalid client weights: {e}")))?;
    Ok(picked.into_vec())
}

/// Uniform subset of size `min(k, N)`.
pub fn select_random_uniform<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k.min(n)).into_vec()
}

/// Indices of the `k` largest losses, lower index first among equal losses.
/// `candidates[i]` is the client whose loss is `losses[i]`.
pub fn select_powd(candidates: &[usize], losses: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| {
        losses[b]
            .total_cmp(&losses[a])
            .then(candidates[a].cmp(&candidates[b]))
    });
    order.into_iter().take(k).map(|i| candidates[i]).collect()
}

/// Clustered sampling: Ward on the angular distance between update vectors
/// into `min(k, N)` groups, then one client per group with probability
/// proportional to `weights`.
pub fn select_cs<R: Rng + ?Sized>(
    updates: &[&[f64]],
    k: usize,
    weights: &[f64],
    rng: &mut R,
) -> Result<(Vec<usize>, SelectionCost)> {
    let n = updates.len();
    let dim = updates.first().map_or(0, |u| u.len());
    let dist = distance_matrix(updates, &vec![0.0; n], 1.0);
    let groups = ward_cluster(&dist, k.min(n))?.groups;
    let mut chosen = Vec::with_capacity(groups.len());
    for g in &groups {
        let w: Vec<f64> = g.iter().map(|&c| weights[c]).collect();
        let j = match WeightedIndex::new(&w) {
            Ok(d) => d.sample(rng),
            Err(_) => rng.random_range(0..g.len()),
        };
        chosen.push(g[j]);
    }
    let pairs = (n * n.saturating_sub(1) / 2) as u64;
    Ok((chosen, SelectionCost::new(dim, pairs * 2 * dim as u64)))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Greedy facility location: repeatedly add the client that most reduces
/// `sum_k min_{j in S} |u_k - u_j|`, where the empty set costs the largest
/// pairwise distance per client. Lowest id wins ties.
pub fn select_divfl(updates: &[&[f64]], k: usize) -> (Vec<usize>, SelectionCost) {
    let n = updates.len();
    let dim = updates.first().map_or(0, |u| u.len());
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = euclidean(updates[i], updates[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let diameter = d.iter().flatten().copied().fold(0.0, f64::max);
    let mut cover = vec![diameter; n];
    let mut taken = vec![false; n];
    let mut chosen = Vec::with_capacity(k.min(n));
    for _ in 0..k.min(n) {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..n).filter(|&j| !taken[j]) {
            let gain: f64 = (0..n).map(|c| (cover[c] - d[c][j]).max(0.0)).sum();
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, j));
            }
        }
        let (_, j) = best.expect("untaken client");
        taken[j] = true;
        chosen.push(j);
        for c in 0..n {
            cover[c] = cover[c].min(d[c][j]);
        }
    }
    let pairs = (n * n.saturating_sub(1) / 2) as u64;
    (chosen, SelectionCost::new(dim, pairs * dim as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn random_takes_everyone_when_k_is_n() {
        let mut s = select_random(4, &[1.0, 2.0, 3.0, 4.0], &mut seeded(0)).unwrap();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3]);
    }

    #[test]
    fn doubled_weight_doubles_frequency() {
        let mut weights = vec![1.0; 20];
        weights[3] = 2.0;
        let mut rng = seeded(8);
        let trials = 100_000;
        let mut counts = vec![0usize; 20];
        for _ in 0..trials {
            counts[select_random(1, &weights, &mut rng).unwrap()[0]] += 1;
        }
        let base = counts.iter().enumerate().filter(|(i, _)| *i != 3).map(|(_, c)| *c).sum::<usize>() as f64 / 19.0;
        let ratio = counts[3] as f64 / base;
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn powd_examples() {
        let ids: Vec<usize> = (0..6).collect();
        assert_eq!(select_powd(&ids, &[1.0; 6], 3), vec![0, 1, 2]);
        assert_eq!(select_powd(&ids, &[0.1, 0.9, 0.3, 0.2, 0.9, 0.0], 1), vec![1]);
        let losses = [0.4, 2.0, 0.4, 1.5, 0.0, 3.0];
        let mut oracle: Vec<(f64, usize)> = losses.iter().copied().zip(0..).collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expect: Vec<usize> = oracle.iter().take(4).map(|p| p.1).collect();
        assert_eq!(select_powd(&ids, &losses, 4), expect);
        assert_eq!(select_powd(&[7, 3], &[1.0, 1.0], 1), vec![3]);
    }

    #[test]
    fn cs_one_per_cluster() {
        let u: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.1]];
        let refs: Vec<&[f64]> = u.iter().map(Vec::as_slice).collect();
        for seed in 0..10 {
            let (s, cost) = select_cs(&refs, 3, &[1.0; 4], &mut seeded(seed)).unwrap();
            assert_eq!(s.len(), 3);
            assert!(!(s.contains(&0) && s.contains(&1)));
            assert_eq!(cost.vector_dim, 2);
        }
        let (mut all, _) = select_cs(&refs, 4, &[1.0; 4], &mut seeded(0)).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    fn greedy_oracle(points: &[[f64; 2]], k: usize) -> Vec<usize> {
        let n = points.len();
        let dist = |a: usize, b: usize| ((points[a][0] - points[b][0]).powi(2) + (points[a][1] - points[b][1]).powi(2)).sqrt();
        let diameter = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| dist(a, b)).fold(0.0, f64::max);
        let cost = |s: &[usize]| -> f64 {
            (0..n).map(|c| s.iter().map(|&j| dist(c, j)).fold(diameter, f64::min)).sum()
        };
        let mut s: Vec<usize> = Vec::new();
        for _ in 0..k {
            let mut best = None;
            for j in (0..n).filter(|j| !s.contains(j)) {
                let mut t = s.clone();
                t.push(j);
                let c = cost(&t);
                if best.is_none_or(|(bc, _)| c < bc - 1e-12) {
                    best = Some((c, j));
                }
            }
            s.push(best.unwrap().1);
        }
        s
    }

    #[test]
    fn divfl_matches_exhaustive_greedy() {
        let mut rng = seeded(3);
        for _ in 0..20 {
            let pts: Vec<[f64; 2]> = (0..6).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            for k in 1..=6 {
                assert_eq!(select_divfl(&refs, k).0, greedy_oracle(&pts, k));
            }
        }
    }

    #[test]
    fn divfl_skips_duplicates() {
        let u: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![5.0, 5.0], vec![0.1, 0.0]];
        let refs: Vec<&[f64]> = u.iter().map(Vec::as_slice).collect();
        let (s, _) = select_divfl(&refs, 3);
        assert!(!(s[..2].contains(&0) && s[..2].contains(&1)));
        let (mut all, _) = select_divfl(&refs, 4);
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }
}
