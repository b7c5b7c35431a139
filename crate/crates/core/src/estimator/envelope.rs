//! Gradient-gap scatter and the exponential envelope
//! `y <= kappa - rho * exp(beta (x - ln C))`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{full_gradient, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    /// `None` for the pooled super-client.
    pub client_id: Option<usize>,
    pub round: usize,
    /// True label entropy of the client.
    pub entropy: f64,
    /// `|eta grad F_k - eta grad F|^2` at the probed model.
    pub gap: f64,
}

/// One point per client: true entropy against the squared distance between
/// the client's scaled full-batch gradient and that of the pooled data.
pub fn assumption_scatter(
    clients: &[Dataset],
    pooled: &Dataset,
    model: &MlpModel,
    eta: f64,
    round: usize,
) -> Result<Vec<ScatterPoint>> {
    if pooled.is_empty() {
        return Err(Error::domain("pooled dataset is empty"));
    }
    let (global, _) = full_gradient(model, pooled)?;
    clients
        .iter()
        .enumerate()
        .map(|(k, ds)| {
            let entropy = ds.label_distribution()?.entropy;
            let (g, _) = full_gradient(model, ds)?;
            let gap = g.iter().zip(&global).map(|(a, b)| (eta * (a - b)).powi(2)).sum();
            Ok(ScatterPoint {
                client_id: Some(k),
                round,
                entropy,
                gap,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub beta: f64,
    pub rho: f64,
    pub kappa: f64,
}

impl EnvelopeParams {
    pub fn bound(&self, x: f64, num_classes: usize) -> f64 {
        self.kappa - self.decay(x, num_classes)
    }

    fn decay(&self, x: f64, num_classes: usize) -> f64 {
        self.rho * (self.beta * (x - (num_classes as f64).ln())).exp()
    }

    /// Whether `(x, y)` lies on or below the envelope.
    pub fn covers(&self, x: f64, y: f64, num_classes: usize) -> bool {
        y + self.decay(x, num_classes) <= self.kappa
    }
}

/// Fraction of points on or below the envelope.
pub fn envelope_coverage(points: &[ScatterPoint], params: &EnvelopeParams, num_classes: usize) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let inside = points
        .iter()
        .filter(|p| params.covers(p.entropy, p.gap, num_classes))
        .count();
    inside as f64 / points.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub params: EnvelopeParams,
    pub coverage: f64,
    /// Mean vertical distance from points to the envelope.
    pub mean_slack: f64,
}

/// Grid search over `(beta, rho)`. For each pair, `kappa` is the smallest
/// value reaching `target_coverage` (raised just above `rho` if needed); the
/// tightest envelope by mean slack wins.
pub fn fit_envelope(points: &[ScatterPoint], num_classes: usize, target_coverage: f64) -> Result<EnvelopeFit> {
    if points.is_empty() {
        return Err(Error::domain("cannot fit an envelope to no points"));
    }
    if !(0.0..=1.0).contains(&target_coverage) {
        return Err(Error::config(format!("coverage target {target_coverage} outside [0, 1]")));
    }
    let y_scale = points.iter().map(|p| p.gap).fold(0.0, f64::max).max(1e-12);
    let need = ((target_coverage * points.len() as f64).ceil() as usize).clamp(1, points.len());
    let betas: Vec<f64> = (1..=40).map(|i| 0.125 * i as f64).collect();
    let rhos: Vec<f64> = (0..=60).map(|i| y_scale * 10f64.powf(-3.0 + i as f64 / 15.0)).collect();

    let mut best: Option<EnvelopeFit> = None;
    let mut shifted = vec![0.0; points.len()];
    for &beta in &betas {
        for &rho in &rhos {
            for (s, p) in shifted.iter_mut().zip(points) {
                *s = p.gap + EnvelopeParams { beta, rho, kappa: 0.0 }.decay(p.entropy, num_classes);
            }
            let mut sorted = shifted.clone();
            sorted.sort_by(f64::total_cmp);
            let kappa = sorted[need - 1].max(rho * (1.0 + 1e-9) + f64::MIN_POSITIVE);
            let params = EnvelopeParams { beta, rho, kappa };
            let mean_slack = shifted.iter().map(|s| kappa - s).sum::<f64>() / points.len() as f64;
            if best.is_none_or(|b| mean_slack < b.mean_slack) {
                best = Some(EnvelopeFit {
                    params,
                    coverage: envelope_coverage(points, &params, num_classes),
                    mean_slack,
                });
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}
