use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Synthetic Gaussian-cluster classification task.
#[derive(Debug, Clone)]
pub struct Blobs {
    /// `per_class_n` samples per class, shuffled.
    pub train: Dataset,
    /// Held-out balanced set drawn from the same class means, 20% of the total.
    pub test: Dataset,
    /// One mean vector per class, row-major `C x dim`.
    pub means: Vec<f64>,
}

/// Test samples generated per class for `per_class_n` training samples.
pub fn test_per_class(per_class_n: usize) -> usize {
    (per_class_n / 4).max(1)
}

/// `num_classes` isotropic Gaussian clusters. Class means have i.i.d. standard
/// normal coordinates; samples add N(0, spread^2) noise per coordinate.
pub fn generate_blobs(num_classes: usize, per_class_n: usize, dim: usize, spread: f64, seed: u64) -> Result<Blobs> {
    if num_classes < 2 || per_class_n < 1 || dim < 2 {
        return Err(Error::config(format!(
            "blobs need C >= 2, per_class_n >= 1, dim >= 2 (got {num_classes}, {per_class_n}, {dim})"
        )));
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::config(format!("spread must be positive, got {spread}")));
    }
    let mut rng = seeded(seed);
    let means: Vec<f64> = (0..num_classes * dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();

    let draw = |n_per_class: usize, rng: &mut crate::rng::SimRng, shuffle: bool| {
        let mut labels: Vec<usize> = (0..num_classes)
            .flat_map(|c| std::iter::repeat_n(c, n_per_class))
            .collect();
        if shuffle {
            labels.shuffle(rng);
        }
        let mut features = Vec::with_capacity(labels.len() * dim);
        for &c in &labels {
            for j in 0..dim {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(means[c * dim + j] + spread * noise);
            }
        }
        Dataset::new(dim, num_classes, features, labels)
    };
    let train = draw(per_class_n, &mut rng, true)?;
    let test = draw(test_per_class(per_class_n), &mut rng, false)?;
    Ok(Blobs { train, test, means })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_by_construction() {
        let blobs = generate_blobs(10, 100, 5, 1.0, 3).unwrap();
        assert_eq!(blobs.train.len(), 1000);
        assert!(blobs.train.class_counts().iter().all(|&c| c == 100));
        let d = blobs.train.label_distribution().unwrap();
        assert!((d.entropy - 10f64.ln()).abs() < 1e-12);
        assert_eq!(blobs.test.len(), 250);
        assert!(blobs.test.class_counts().iter().all(|&c| c == 25));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_blobs(4, 20, 3, 0.5, 11).unwrap();
        let b = generate_blobs(4, 20, 3, 0.5, 11).unwrap();
        let bits = |d: &Dataset| d.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.train), bits(&b.train));
        assert_eq!(a.train.labels(), b.train.labels());
        assert_eq!(bits(&a.test), bits(&b.test));
        let c = generate_blobs(4, 20, 3, 0.5, 12).unwrap();
        assert_ne!(bits(&a.train), bits(&c.train));
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(generate_blobs(1, 10, 3, 1.0, 0).is_err());
        assert!(generate_blobs(3, 0, 3, 1.0, 0).is_err());
        assert!(generate_blobs(3, 10, 1, 1.0, 0).is_err());
        assert!(generate_blobs(3, 10, 3, 0.0, 0).is_err());
    }
}
