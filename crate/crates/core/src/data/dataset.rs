use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature matrix (row-major), integer labels and per-class counts.
///
/// The same type serves as the pooled dataset and as a client's private
/// shard. `source_ids` records each row's index in the pooled dataset it was
/// cut from (identity for a pooled set).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
    source_ids: Vec<usize>,
}

/// A client's local dataset `B_k`.
pub type ClientDataset = Dataset;

impl Dataset {
    pub fn new(dim: usize, num_classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let ids = (0..labels.len()).collect();
        Self::with_source_ids(dim, num_classes, features, labels, ids)
    }

    pub fn with_source_ids(
        dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        source_ids: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::config("dataset needs a positive dimension and class count"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::config(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if source_ids.len() != labels.len() {
            return Err(Error::config("one source id per sample is required"));
        }
        let mut class_counts = vec![0; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(Error::domain(format!("label {y} out of range for {num_classes} classes")));
            }
            class_counts[y] += 1;
        }
        Ok(Self {
            dim,
            num_classes,
            features,
            labels,
            class_counts,
            source_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.row(i), self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    /// Rows at `indices`; source ids are carried over from `self`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            ids.push(self.source_ids[i]);
        }
        Self::with_source_ids(self.dim, self.num_classes, features, labels, ids)
            .expect("subset of a valid dataset is valid")
    }

    /// Empirical label distribution.
    pub fn label_distribution(&self) -> Result<LabelDistribution> {
        label_distribution(self)
    }
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Per-class fractions of a dataset and their entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
    pub entropy: f64,
}

impl LabelDistribution {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::domain("label distribution entries must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("label distribution sums to {total}, not 1")));
        }
        let entropy = entropy(&probs);
        Ok(Self { probs, entropy })
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self::from_probs(vec![1.0 / num_classes as f64; num_classes]).expect("uniform is valid")
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Self {
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        Self::from_probs(probs).expect("one-hot is valid")
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Err(Error::domain("label distribution of an empty dataset"));
        }
        Self::from_probs(counts.iter().map(|&c| c as f64 / n as f64).collect())
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }
}

pub fn label_distribution(ds: &Dataset) -> Result<LabelDistribution> {
    LabelDistribution::from_counts(ds.class_counts())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_counts(counts: &[usize]) -> Dataset {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        Dataset::new(1, counts.len(), vec![0.0; labels.len()], labels).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let d = label_distribution(&with_counts(&[1, 1, 1, 1])).unwrap();
        assert!((d.entropy - 4f64.ln()).abs() < 1e-12);
        assert!(d.probs.iter().all(|&p| p == 0.25));
        assert_eq!(label_distribution(&with_counts(&[4, 0, 0, 0])).unwrap().entropy, 0.0);
        let d = label_distribution(&with_counts(&[3, 1])).unwrap();
        assert!((d.entropy - 0.562335).abs() < 1e-6);
    }

    #[test]
    fn empty_dataset_is_domain_error() {
        let ds = Dataset::new(2, 3, vec![], vec![]).unwrap();
        assert!(matches!(label_distribution(&ds), Err(Error::Domain(_))));
    }

    #[test]
    fn counts_track_labels() {
        let ds = Dataset::new(1, 3, vec![0.0; 5], vec![2, 0, 2, 2, 1]).unwrap();
        assert_eq!(ds.class_counts(), &[1, 1, 3]);
        let sub = ds.subset(&[0, 2]);
        assert_eq!(sub.class_counts(), &[0, 0, 2]);
        assert_eq!(sub.source_ids(), &[0, 2]);
        assert!(Dataset::new(1, 2, vec![0.0], vec![2]).is_err());
        assert!(Dataset::new(2, 2, vec![0.0], vec![0]).is_err());
    }
}
