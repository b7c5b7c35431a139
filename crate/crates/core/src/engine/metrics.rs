use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelDistribution};
use crate::error::{Error, Result};
use crate::nn::{ce_loss, softmax, MlpModel};
use crate::selector::SelectorKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub selector: SelectorKind,
    pub selected_ids: Vec<usize>,
    pub avg_train_loss: f64,
    pub std_train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    pub h_m_diag: f64,
    /// Annealing exponent; only meaningful for the heterogeneity-guided selector.
    pub gamma_t: Option<f64>,
    /// Seconds spent on the round. Not written to the CSV.
    pub wall_time: f64,
}

pub const CSV_HEADER: [&str; 8] = [
    "round",
    "selector",
    "selected_ids",
    "avg_train_loss",
    "std_train_loss",
    "test_accuracy",
    "h_m_diag",
    "gamma_t",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(rows: &[RoundMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        let ids = r.selected_ids.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            r.round.to_string(),
            r.selector.to_string(),
            ids,
            r.avg_train_loss.to_string(),
            r.std_train_loss.to_string(),
            opt(r.test_accuracy),
            r.h_m_diag.to_string(),
            opt(r.gamma_t),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy (argmax of logits, lowest class on ties) and mean cross-entropy.
pub fn evaluate(model: &MlpModel, test: &Dataset) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::domain("cannot evaluate on an empty test set"));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, y) in test.iter() {
        let q = model.logits(x)?;
        let pred = argmax(&q);
        correct += usize::from(pred == y);
        loss += ce_loss(&softmax(&q), y);
    }
    let n = test.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Index of the largest value, first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `sum_k w_k exp(beta H(D_k)) / exp(beta ln C)`, a relative diagnostic that
/// equals 1 when every client is balanced.
pub fn system_heterogeneity(dists: &[LabelDistribution], weights: &[f64], beta: f64) -> f64 {
    let Some(first) = dists.first() else {
        return 0.0;
    };
    let ln_c = (first.num_classes() as f64).ln();
    let total: f64 = weights.iter().sum();
    dists
        .iter()
        .zip(weights)
        .map(|(d, w)| w / total * (beta * (d.entropy - ln_c)).exp())
        .sum()
}

/// Result of [`savitzky_golay`].
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub values: Vec<f64>,
    /// `false` when the series was shorter than the window and returned as-is.
    pub smoothed: bool,
}

/// Solve `a x = b` for a small dense system by Gauss-Jordan with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Weights `c` such that the least-squares polynomial of degree `order`
/// through points at offsets `-h..=h` (scaled by `h`), evaluated at `at`,
/// equals `sum_i c_i y_i`.
fn fit_weights(window: usize, order: usize, at: f64) -> Vec<f64> {
    let h = (window / 2) as f64;
    let xs: Vec<f64> = (0..window).map(|i| (i as f64 - h) / h).collect();
    let p = order + 1;
    let mut ata = vec![vec![0.0; p]; p];
    for x in &xs {
        for r in 0..p {
            for c in 0..p {
                ata[r][c] += x.powi((r + c) as i32);
            }
        }
    }
    let z = at / h;
    let e: Vec<f64> = (0..p).map(|j| z.powi(j as i32)).collect();
    // c_i = e^T (A^T A)^{-1} a_i, with a_i the i-th Vandermonde row
    let u = solve(ata, e);
    xs.iter()
        .map(|x| (0..p).map(|j| u[j] * x.powi(j as i32)).sum())
        .collect()
}

/// Local least-squares polynomial smoothing. Interior points use the centred
/// window; the first and last half-windows are read off polynomials fitted
/// to the first and last full windows.
pub fn savitzky_golay(series: &[f64], window: usize, polyorder: usize) -> Result<Smoothed> {
    if window % 2 == 0 || window == 0 {
        return Err(Error::config(format!("window must be odd, got {window}")));
    }
    if polyorder >= window {
        return Err(Error::config(format!("polyorder {polyorder} must be below window {window}")));
    }
    let n = series.len();
    if n < window {
        return Ok(Smoothed {
            values: series.to_vec(),
            smoothed: false,
        });
    }
    let h = window / 2;
    let centre = fit_weights(window, polyorder, 0.0);
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate().take(n - h).skip(h) {
        *o = centre.iter().zip(&series[i - h..=i + h]).map(|(c, y)| c * y).sum();
    }
    for i in 0..h {
        let head = fit_weights(window, polyorder, i as f64 - h as f64);
        out[i] = head.iter().zip(&series[..window]).map(|(c, y)| c * y).sum();
        let tail = fit_weights(window, polyorder, h as f64 - i as f64);
        out[n - 1 - i] = tail.iter().zip(&series[n - window..]).map(|(c, y)| c * y).sum();
    }
    Ok(Smoothed {
        values: out,
        smoothed: true,
    })
}

pub const SMOOTHING_WINDOW: usize = 13;
pub const SMOOTHING_ORDER: usize = 3;

/// Evaluated `(round, accuracy)` pairs of a run, in round order.
pub fn accuracy_curve(rows: &[RoundMetrics]) -> Vec<(usize, f64)> {
    rows.iter().filter_map(|r| r.test_accuracy.map(|a| (r.round, a))).collect()
}

/// Smooth the accuracy values of a curve with the default window.
pub fn smooth_curve(curve: &[(usize, f64)]) -> Result<Vec<(usize, f64)>> {
    let ys: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let s = savitzky_golay(&ys, SMOOTHING_WINDOW, SMOOTHING_ORDER)?;
    Ok(curve.iter().zip(s.values).map(|(c, v)| (c.0, v)).collect())
}

/// First round whose accuracy reaches `target`.
pub fn rounds_to_target(curve: &[(usize, f64)], target: f64) -> Option<usize> {
    curve.iter().find(|c| c.1 >= target).map(|c| c.0)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    (crate::stats::mean(xs), crate::stats::std_dev(xs))
}
