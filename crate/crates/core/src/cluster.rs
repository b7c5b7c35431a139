//! Client dissimilarity over (bias update, estimated entropy) pairs and
//! agglomerative Ward clustering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight of the angular term in [`pair_distance`].
pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub lambda: f64,
    /// Number of groups; `None` means "same as the number of sampled clients".
    #[serde(default)]
    pub num_clusters: Option<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            num_clusters: None,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        match self.num_clusters {
            Some(0) => Err(Error::config("num_clusters must be at least 1")),
            Some(m) if m > num_clients => Err(Error::config(format!(
                "num_clusters {m} exceeds the number of clients {num_clients}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Angle between two vectors in `[0, pi]`. A zero vector is orthogonal to
/// every non-zero vector and at angle 0 from another zero vector.
pub fn angle(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (nu == 0.0, nv == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => std::f64::consts::FRAC_PI_2,
        _ => {
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            (dot / (nu * nv)).clamp(-1.0, 1.0).acos()
        }
    }
}

/// `lambda * angle(db_u, db_k) + (1 - lambda) |h_u - h_k|`.
pub fn pair_distance(db_u: &[f64], db_k: &[f64], h_u: f64, h_k: f64, lambda: f64) -> f64 {
    lambda * angle(db_u, db_k) + (1.0 - lambda) * (h_u - h_k).abs()
}

/// Symmetric matrix of [`pair_distance`] with an exact zero diagonal.
pub fn distance_matrix(updates: &[&[f64]], entropies: &[f64], lambda: f64) -> Vec<Vec<f64>> {
    let n = updates.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = pair_distance(updates[i], updates[j], entropies[i], entropies[j], lambda);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// One agglomeration step. Leaves are `0..N`; the cluster formed at step `s`
/// is `N + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub step: usize,
    pub merged_a: usize,
    pub merged_b: usize,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Member ids of each group, ascending; groups ordered by smallest member.
    pub groups: Vec<Vec<usize>>,
    /// Mean estimated entropy per group; empty until [`annotate_means`].
    pub mean_entropy: Vec<f64>,
}

impl ClusterAssignment {
    pub fn num_clients(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group index of every client.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_clients()];
        for (g, members) in self.groups.iter().enumerate() {
            for &k in members {
                out[k] = g;
            }
        }
        out
    }
}

struct Node {
    id: usize,
    members: Vec<usize>,
}

fn validate_matrix(dist: &[Vec<f64>]) -> Result<()> {
    let n = dist.len();
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            return Err(Error::config("distance matrix is not square"));
        }
        if row[i] != 0.0 {
            return Err(Error::config(format!("distance matrix diagonal entry {i} is not zero")));
        }
        for (j, &v) in row.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() || v != dist[j][i] {
                return Err(Error::config(format!("distance matrix entry ({i}, {j}) is invalid or asymmetric")));
            }
        }
    }
    Ok(())
}

/// Ward agglomeration stopped at `num_clusters` groups.
///
/// Works on squared dissimilarities with the Lance-Williams recurrence
/// `d(k, i+j)^2 = ((n_i + n_k) d(k,i)^2 + (n_j + n_k) d(k,j)^2 - n_k d(i,j)^2) / (n_i + n_j + n_k)`
/// and reports heights as square roots. Among equal-height candidates the
/// pair whose smallest member ids are lowest is merged first.
pub fn ward_merges(dist: &[Vec<f64>], num_clusters: usize) -> Result<(ClusterAssignment, Vec<Merge>)> {
    validate_matrix(dist)?;
    let n = dist.len();
    if num_clusters == 0 || num_clusters > n {
        return Err(Error::config(format!("cannot form {num_clusters} clusters from {n} clients")));
    }
    let mut d2: Vec<Vec<f64>> = dist.iter().map(|r| r.iter().map(|v| v * v).collect()).collect();
    let mut active: Vec<Node> = (0..n).map(|i| Node { id: i, members: vec![i] }).collect();
    // slot[a] indexes rows of d2 for active[a]
    let mut slot: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - num_clusters);

    for step in 0..n - num_clusters {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let v = d2[slot[a]][slot[b]];
                let better = match best {
                    None => true,
                    // active is kept sorted by smallest member, so scan order is the tie-break
                    Some((bv, _, _)) => v < bv,
                };
                if better {
                    best = Some((v, a, b));
                }
            }
        }
        let (v, a, b) = best.expect("at least two active clusters");
        let (na, nb) = (active[a].members.len() as f64, active[b].members.len() as f64);
        let (sa, sb) = (slot[a], slot[b]);
        for c in 0..active.len() {
            if c == a || c == b {
                continue;
            }
            let sc = slot[c];
            let nc = active[c].members.len() as f64;
            let updated = ((na + nc) * d2[sc][sa] + (nb + nc) * d2[sc][sb] - nc * v) / (na + nb + nc);
            let updated = updated.max(0.0);
            d2[sc][sa] = updated;
            d2[sa][sc] = updated;
        }
        merges.push(Merge {
            step,
            merged_a: active[a].id,
            merged_b: active[b].id,
            height: v.max(0.0).sqrt(),
        });
        let absorbed = active.remove(b);
        slot.remove(b);
        let node = &mut active[a];
        node.members.extend(absorbed.members);
        node.members.sort_unstable();
        node.id = n + step;
    }

    let groups = active.into_iter().map(|node| node.members).collect();
    Ok((
        ClusterAssignment {
            groups,
            mean_entropy: Vec::new(),
        },
        merges,
    ))
}

pub fn ward_cluster(dist: &[Vec<f64>], num_clusters: usize) -> Result<ClusterAssignment> {
    ward_merges(dist, num_clusters).map(|(assignment, _)| assignment)
}

/// Fill `mean_entropy` with the arithmetic mean of member entropies.
pub fn annotate_means(mut assignment: ClusterAssignment, entropies: &[f64]) -> ClusterAssignment {
    assignment.mean_entropy = assignment
        .groups
        .iter()
        .map(|g| g.iter().map(|&k| entropies[k]).sum::<f64>() / g.len() as f64)
        .collect();
    assignment
}

/// Fraction of clients whose group's majority label matches their own label.
pub fn purity(assignment: &ClusterAssignment, truth: &[usize]) -> f64 {
    let mut agree = 0;
    for g in &assignment.groups {
        let mut counts = std::collections::BTreeMap::new();
        for &k in g {
            *counts.entry(truth[k]).or_insert(0usize) += 1;
        }
        agree += counts.values().copied().max().unwrap_or(0);
    }
    agree as f64 / assignment.num_clients() as f64
}
