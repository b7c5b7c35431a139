//! Confusion averages, the expected bias update and the entropy-gap bound.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelDistribution};
use crate::error::{Error, Result};
use crate::nn::MlpModel;

/// `e[i]`: mean softmax mass on class `i` over samples not labelled `i`.
/// `delta = max_i |mean(e) - e[i]|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionAverages {
    pub e: Vec<f64>,
    pub delta: f64,
}

impl ConfusionAverages {
    pub fn from_values(e: Vec<f64>) -> Self {
        let m = e.iter().sum::<f64>() / e.len() as f64;
        let delta = e.iter().map(|v| (m - v).abs()).fold(0.0, f64::max);
        Self { e, delta }
    }

    pub fn sum(&self) -> f64 {
        self.e.iter().sum()
    }
}

pub fn confusion_averages(model: &MlpModel, data: &Dataset) -> Result<ConfusionAverages> {
    let c = model.num_classes();
    if data.num_classes() != c {
        return Err(Error::config(format!("dataset has {} classes, model {c}", data.num_classes())));
    }
    if let Some(i) = (0..c).find(|&i| data.class_counts()[i] == data.len()) {
        return Err(Error::domain(format!("every sample is labelled {i}; no off-class samples")));
    }
    let mut sums = vec![0.0; c];
    for (x, y) in data.iter() {
        let s = model.forward(x)?.probs;
        for i in (0..c).filter(|&i| i != y) {
            sums[i] += s[i];
        }
    }
    let e = sums
        .iter()
        .zip(data.class_counts())
        .map(|(s, &n_i)| s / (data.len() - n_i) as f64)
        .collect();
    Ok(ConfusionAverages::from_values(e))
}

/// `eta R (D_i sum(E) - E_i)` for every class.
pub fn expected_bias_update(d: &LabelDistribution, e: &ConfusionAverages, eta: f64, local_epochs: usize) -> Vec<f64> {
    let scale = eta * local_epochs as f64;
    let total = e.sum();
    d.probs.iter().zip(&e.e).map(|(di, ei)| scale * (di * total - ei)).collect()
}

/// Lower bound on `E[H_hat(D_u) - H_hat(D_k)]`:
///
/// `1/2 (eta R sum(E) / (C T))^2 |D_k - U|_2^2 - (eta R / T) |D_u - U|_inf - C_delta delta`
/// with `C_delta = eta R (eta R + C^2 T ln C) / (C^2 T^2)`.
pub fn theorem1_rhs(
    d_u: &LabelDistribution,
    d_k: &LabelDistribution,
    e: &ConfusionAverages,
    eta: f64,
    local_epochs: usize,
    temperature: f64,
) -> f64 {
    let c = d_k.num_classes() as f64;
    let er = eta * local_epochs as f64;
    let uniform = 1.0 / c;
    let gap_k: f64 = d_k.probs.iter().map(|p| (p - uniform).powi(2)).sum();
    let gap_u = d_u.probs.iter().map(|p| (p - uniform).abs()).fold(0.0, f64::max);
    let lead = er * e.sum() / (c * temperature);
    let c_delta = er * (er + c * c * temperature * c.ln()) / (c * c * temperature * temperature);
    0.5 * lead * lead * gap_k - er / temperature * gap_u - c_delta * e.delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn zero_model_confusion_is_uniform() {
        let model = MlpModel::zeros(&[3, 4]).unwrap();
        let ds = Dataset::new(3, 4, (0..24).map(|v| v as f64).collect(), vec![0, 1, 2, 3, 1, 1, 0, 2]).unwrap();
        let ca = confusion_averages(&model, &ds).unwrap();
        assert!(ca.e.iter().all(|&v| v == 0.25));
        assert_eq!(ca.delta, 0.0);
    }

    #[test]
    fn separating_model_has_zero_confusion() {
        // logits = 100 * x with one-hot x equal to the label
        let mut params = vec![0.0; 3 * 3 + 3];
        for i in 0..3 {
            params[i * 3 + i] = 100.0;
        }
        let model = MlpModel::from_params(&[3, 3], params).unwrap();
        let labels = vec![0, 1, 2, 2];
        let feats: Vec<f64> = labels.iter().flat_map(|&y| (0..3).map(move |j| f64::from(j == y))).collect();
        let ds = Dataset::new(3, 3, feats, labels).unwrap();
        let ca = confusion_averages(&model, &ds).unwrap();
        assert!(ca.e.iter().all(|&v| v < 1e-40));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = seeded(9);
        let model = MlpModel::init(&[4, 5, 3], &mut rng).unwrap();
        let labels: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
        let feats: Vec<f64> = (0..120).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ds = Dataset::new(4, 3, feats, labels).unwrap();
        let ca = confusion_averages(&model, &ds).unwrap();
        for i in 0..3 {
            let (mut num, mut den) = (0.0, 0.0);
            for n in 0..ds.len() {
                if ds.labels()[n] != i {
                    num += softmax(&model.logits(ds.row(n)).unwrap())[i];
                    den += 1.0;
                }
            }
            assert!((ca.e[i] - num / den).abs() < 1e-12);
        }
        let m = ca.e.iter().sum::<f64>() / 3.0;
        let delta = ca.e.iter().map(|v| (v - m).abs()).fold(0.0, f64::max);
        assert!((ca.delta - delta).abs() < 1e-15);
    }

    #[test]
    fn single_class_dataset_is_domain_error() {
        let model = MlpModel::zeros(&[2, 3]).unwrap();
        let ds = Dataset::new(2, 3, vec![0.0; 4], vec![1, 1]).unwrap();
        assert!(matches!(confusion_averages(&model, &ds), Err(Error::Domain(_))));
    }

    #[test]
    fn expected_update_examples() {
        let e = ConfusionAverages::from_values(vec![0.5, 0.5]);
        let d = LabelDistribution::from_probs(vec![0.75, 0.25]).unwrap();
        let u = expected_bias_update(&d, &e, 0.1, 1);
        assert!((u[0] - 0.025).abs() < 1e-15 && (u[1] + 0.025).abs() < 1e-15);
        let e = ConfusionAverages::from_values(vec![0.3; 4]);
        let u = expected_bias_update(&LabelDistribution::uniform(4), &e, 0.5, 3);
        assert!(u.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn bound_examples() {
        let u = LabelDistribution::uniform(10);
        let one_hot = LabelDistribution::one_hot(10, 3);
        let e = ConfusionAverages::from_values(vec![0.1; 10]);
        assert!(theorem1_rhs(&u, &u, &e, 0.1, 1, 0.0025).abs() < 1e-12);
        let rhs = theorem1_rhs(&u, &one_hot, &e, 0.1, 1, 0.0025);
        assert!((rhs - 0.5 * 4.0f64.powi(2) * 0.9).abs() < 1e-9);
        assert!((rhs - 7.2).abs() < 1e-9);
        let skewed = ConfusionAverages {
            e: vec![0.1; 10],
            delta: 0.01,
        };
        assert!(theorem1_rhs(&u, &one_hot, &skewed, 0.1, 1, 0.0025) < rhs);
    }
}
