use rand::Rng;

use crate::error::{Error, Result};

/// Dense feed-forward classifier with ReLU between layers and a linear output layer.
///
/// All parameters live in one flat vector. Layer `l` maps `dims[l]` inputs to
/// `dims[l + 1]` outputs and stores its weights row-major (`out x in`) followed
/// by its bias. The output-layer bias is therefore the last `C` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Result of a forward pass on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Input of the output layer (the penultimate activations `z`).
    pub hidden: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpModel {
    /// All-zero model. `dims = [input, hidden..., classes]`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("a model needs at least an input and an output layer"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("layer widths must be positive, got {dims:?}")));
        }
        if dims[dims.len() - 1] < 2 {
            return Err(Error::config("the output layer needs at least two classes"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; param_count(dims)],
        })
    }

    /// Weights and biases uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let len = fan_out * fan_in + fan_out;
            for p in &mut model.params[offset..offset + len] {
                *p = rng.random_range(-bound..bound);
            }
            offset += len;
        }
        Ok(model)
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let model = Self::zeros(dims)?;
        if params.len() != model.params.len() {
            return Err(Error::config(format!(
                "expected {} parameters for dims {dims:?}, got {}",
                model.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("model parameters must be finite"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Width `L` of the signal entering the output layer.
    pub fn penultimate_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    /// Offset of layer `l`'s weights in the flat vector; its bias follows them.
    fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.dims[..=layer])
    }

    pub fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let start = self.layer_offset(layer);
        start..start + self.dims[layer + 1] * self.dims[layer]
    }

    pub fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let start = self.weight_range(layer).end;
        start..start + self.dims[layer + 1]
    }

    /// Position of the output-layer bias `b` inside the flat parameter vector.
    pub fn output_bias_range(&self) -> std::ops::Range<usize> {
        self.bias_range(self.num_layers() - 1)
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.params[self.output_bias_range()]
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.params[self.weight_range(self.num_layers() - 1)]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::config(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Activations of every layer: `acts[0] = x`, `acts[l + 1]` is the output of
    /// layer `l` (post-ReLU for hidden layers, logits for the last one).
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[self.weight_range(l)];
            let b = &self.params[self.bias_range(l)];
            let input = &acts[l];
            let last = l + 1 == self.num_layers();
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let v = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if last {
                        v
                    } else {
                        v.max(0.0)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut acts = self.trace(x);
        let logits = acts.pop().expect("at least one layer");
        let hidden = acts.pop().expect("input activations");
        let probs = softmax(&logits);
        Ok(ForwardPass {
            logits,
            probs,
            hidden,
        })
    }

    /// Logits only.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).pop().expect("at least one layer"))
    }

    /// Gradient of the cross-entropy loss for one sample.
    pub fn backward(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.num_params()];
        self.accumulate_gradient(x, y, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Adds `scale * grad CE(x, y)` into `grad` and returns the (clamped) loss.
    pub fn accumulate_gradient(&self, x: &[f64], y: usize, scale: f64, grad: &mut [f64]) -> Result<f64> {
        self.check_input(x)?;
        if y >= self.num_classes() {
            return Err(Error::domain(format!(
                "label {y} out of range for {} classes",
                self.num_classes()
            )));
        }
        debug_assert_eq!(grad.len(), self.num_params());
        let acts = self.trace(x);
        let probs = softmax(&acts[acts.len() - 1]);
        let loss = ce_loss(&probs, y);

        // dL/dq for the output layer
        let mut delta = bias_grad_closed_form(&probs, y);
        for l in (0..self.num_layers()).rev() {
            let n_in = self.dims[l];
            let input = &acts[l];
            let w_range = self.weight_range(l);
            let b_range = self.bias_range(l);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad[b_range.start + o] += scale * d;
                let g_row = &mut grad[w_range.start + o * n_in..w_range.start + (o + 1) * n_in];
                for (g, a) in g_row.iter_mut().zip(input) {
                    *g += scale * d * a;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[w_range];
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += wv * d;
                }
            }
            // ReLU derivative, taken as 0 at the kink
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(loss)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(q: &[f64]) -> Vec<f64> {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Smallest probability admitted inside the logarithm of [`ce_loss`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy `-ln s_y`, with `s_y` clamped at [`PROB_FLOOR`].
pub fn ce_loss(probs: &[f64], y: usize) -> f64 {
    -probs[y].max(PROB_FLOOR).ln()
}

/// Per-sample gradient of the cross-entropy with respect to the output bias.
///
/// Component `y` is `-(1 - s_y)`, i.e. minus the sum of all other components;
/// every other component `i` is `s_i`.
pub fn bias_grad_closed_form(probs: &[f64], y: usize) -> Vec<f64> {
    let others: f64 = probs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(_, s)| s)
        .sum();
    probs
        .iter()
        .enumerate()
        .map(|(i, &s)| if i == y { -others } else { s })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_model_is_uniform() {
        let model = MlpModel::zeros(&[3, 4, 5]).unwrap();
        let out = model.forward(&[0.3, -1.0, 2.0]).unwrap();
        for p in &out.probs {
            assert!((p - 0.2).abs() < 1e-15);
        }
        assert_eq!(out.hidden.len(), 4);
    }

    #[test]
    fn two_class_zero_logits() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_survives_extreme_logits() {
        let s = softmax(&[1e4, 0.0, -1e4]);
        assert!(s.iter().all(|v| v.is_finite()));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let model = MlpModel::zeros(&[3, 2]).unwrap();
        assert!(matches!(model.forward(&[1.0, 2.0]), Err(Error::Config(_))));
        assert!(matches!(model.backward(&[1.0], 0), Err(Error::Config(_))));
    }

    #[test]
    fn ce_loss_values() {
        assert_eq!(ce_loss(&[0.0, 1.0], 1), 0.0);
        let uniform = vec![0.1; 10];
        assert!((ce_loss(&uniform, 3) - 10f64.ln()).abs() < 1e-12);
        assert!((ce_loss(&[0.25, 0.75], 1) - 0.287682).abs() < 1e-6);
        // clamped, never infinite
        assert!((ce_loss(&[1.0, 0.0], 1) - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(bias_grad_closed_form(&[0.5, 0.5], 0), vec![-0.5, 0.5]);
        let g = bias_grad_closed_form(&[0.2, 0.3, 0.5], 2);
        let expected = [0.2, 0.3, -0.5];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_and_weights_give_zero_hidden_weight_grads() {
        let mut rng = seeded(1);
        let mut model = MlpModel::init(&[3, 4, 3], &mut rng).unwrap();
        let w0 = model.weight_range(0);
        let w1 = model.weight_range(1);
        model.params_mut()[w0.clone()].fill(0.0);
        model.params_mut()[w1].fill(0.0);
        let g = model.backward(&[0.0; 3], 1).unwrap();
        assert!(g[w0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_layout() {
        let model = MlpModel::zeros(&[4, 2, 3]).unwrap();
        assert_eq!(model.num_params(), 4 * 2 + 2 + 2 * 3 + 3);
        assert_eq!(model.output_bias_range(), 16..19);
        assert_eq!(model.penultimate_dim(), 2);
        assert!(MlpModel::zeros(&[4]).is_err());
        assert!(MlpModel::zeros(&[4, 1]).is_err());
    }
}
