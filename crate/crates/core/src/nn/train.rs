//! Local training: mini-batch SGD, SGD with momentum, Adam, and the FedProx
//! proximal term.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{softmax, ce_loss, MlpModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// `m_1 = g_1`, `m_r = mu m_{r-1} + (1 - mu) g_r`, step `-eta m_r`.
    SgdMomentum { momentum: f64 },
    /// Bias-corrected Adam.
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// FedProx coefficient; 0 disables the proximal term.
    #[serde(default)]
    pub prox_mu: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            local_epochs: 2,
            batch_size: 64,
            optimizer: Optimizer::Sgd,
            prox_mu: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.prox_mu >= 0.0) {
            return Err(Error::config(format!("prox_mu must be non-negative, got {}", self.prox_mu)));
        }
        match self.optimizer {
            Optimizer::SgdMomentum { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::config(format!("momentum must lie in [0, 1), got {momentum}")))
            }
            Optimizer::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) =>
            {
                Err(Error::config("adam needs beta1, beta2 in [0, 1) and eps > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Result of one client's local training round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    /// `theta_k - theta` over the full flat parameter vector.
    pub delta_theta: Vec<f64>,
    /// Output-layer bias slice of `delta_theta`.
    pub delta_b: Vec<f64>,
    /// Mean cross-entropy over the samples of the final local epoch.
    pub train_loss: f64,
}

/// Visiting order of one epoch.
pub fn epoch_order<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Mean gradient and mean loss of a batch of rows of `data`.
pub fn batch_gradient(model: &MlpModel, data: &Dataset, rows: &[usize]) -> Result<(Vec<f64>, f64)> {
    let mut grad = vec![0.0; model.num_params()];
    if rows.is_empty() {
        return Ok((grad, 0.0));
    }
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for &i in rows {
        let (x, y) = data.sample(i);
        loss += model.accumulate_gradient(x, y, scale, &mut grad)?;
    }
    Ok((grad, loss * scale))
}

/// Full-batch gradient and mean loss over the whole dataset.
pub fn full_gradient(model: &MlpModel, data: &Dataset) -> Result<(Vec<f64>, f64)> {
    let rows: Vec<usize> = (0..data.len()).collect();
    batch_gradient(model, data, &rows)
}

/// Mean cross-entropy of `model` on `data` (no gradient).
pub fn mean_loss(model: &MlpModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("loss of an empty dataset"));
    }
    let mut total = 0.0;
    for (x, y) in data.iter() {
        total += ce_loss(&softmax(&model.logits(x)?), y);
    }
    Ok(total / data.len() as f64)
}

enum OptState {
    Sgd,
    Momentum { mu: f64, m: Option<Vec<f64>> },
    Adam { b1: f64, b2: f64, eps: f64, m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl OptState {
    fn new(opt: Optimizer, n: usize) -> Self {
        match opt {
            Optimizer::Sgd => OptState::Sgd,
            Optimizer::SgdMomentum { momentum } => OptState::Momentum { mu: momentum, m: None },
            Optimizer::Adam { beta1, beta2, eps } => OptState::Adam {
                b1: beta1,
                b2: beta2,
                eps,
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptState::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptState::Momentum { mu, m } => {
                let m = match m {
                    Some(m) => {
                        for (mi, g) in m.iter_mut().zip(grad) {
                            *mi = *mu * *mi + (1.0 - *mu) * g;
                        }
                        m
                    }
                    None => m.insert(grad.to_vec()),
                };
                for (p, mi) in params.iter_mut().zip(m.iter()) {
                    *p -= lr * mi;
                }
            }
            OptState::Adam { b1, b2, eps, m, v, t } => {
                *t += 1;
                let c1 = 1.0 - b1.powi(*t);
                let c2 = 1.0 - b2.powi(*t);
                for i in 0..params.len() {
                    m[i] = *b1 * m[i] + (1.0 - *b1) * grad[i];
                    v[i] = *b2 * v[i] + (1.0 - *b2) * grad[i] * grad[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
    }
}

/// Train a copy of `global` on `data` for `cfg.local_epochs` epochs.
///
/// Each epoch visits the samples in a fresh shuffled order drawn from
/// `seed`; the last batch of an epoch may be short. With plain SGD and no
/// proximal term the bias delta equals `-eta` times the sum over steps of the
/// mini-batch mean bias gradients.
pub fn local_update(global: &MlpModel, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<LocalUpdate> {
    if data.is_empty() {
        return Err(Error::domain("local update on an empty dataset"));
    }
    if data.dim() != global.input_dim() {
        return Err(Error::config(format!(
            "dataset dimension {} does not match model input {}",
            data.dim(),
            global.input_dim()
        )));
    }
    if cfg.batch_size == 0 || cfg.local_epochs == 0 {
        return Err(Error::config("batch_size and local_epochs must be at least 1"));
    }
    let mut rng = seeded(seed);
    let mut model = global.clone();
    let mut state = OptState::new(cfg.optimizer, model.num_params());
    let mut train_loss = 0.0;

    for epoch in 0..cfg.local_epochs {
        let order = epoch_order(data.len(), &mut rng);
        let mut epoch_loss = 0.0;
        for rows in order.chunks(cfg.batch_size) {
            let (mut grad, loss) = batch_gradient(&model, data, rows)?;
            epoch_loss += loss * rows.len() as f64;
            if cfg.prox_mu > 0.0 {
                for ((g, p), p0) in grad.iter_mut().zip(model.params()).zip(global.params()) {
                    *g += cfg.prox_mu * (p - p0);
                }
            }
            state.step(model.params_mut(), &grad, cfg.learning_rate);
        }
        if epoch + 1 == cfg.local_epochs {
            train_loss = epoch_loss / data.len() as f64;
        }
    }

    let delta_theta: Vec<f64> = model
        .params()
        .iter()
        .zip(global.params())
        .map(|(a, b)| a - b)
        .collect();
    if delta_theta.iter().any(|d| !d.is_finite()) {
        return Err(Error::Invariant("local update diverged to non-finite parameters".into()));
    }
    let delta_b = delta_theta[global.output_bias_range()].to_vec();
    Ok(LocalUpdate {
        delta_theta,
        delta_b,
        train_loss,
    })
}
