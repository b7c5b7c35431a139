//! Rounds-to-target table across metrics CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use fedsim_core::engine::{rounds_to_target, smooth_curve};
use fedsim_core::selector::SelectorKind;
use fedsim_core::{Error, Result};

/// Evaluated `(round, accuracy)` points of one metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub selector: SelectorKind,
    pub curve: Vec<(usize, f64)>,
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    let bad = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(bad)?;
    let headers = rdr.headers().map_err(bad)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column '{name}'", path.display())))
    };
    let (round_col, sel_col, acc_col) = (col("round")?, col("selector")?, col("test_accuracy")?);
    let mut selector = None;
    let mut curve = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        let field_err = |what: &str| Error::Config(format!("{}: bad {what} on line {}", path.display(), curve.len() + 2));
        let sel: SelectorKind = rec[sel_col].parse()?;
        if selector.is_some_and(|s| s != sel) {
            return Err(Error::Config(format!("{}: mixes selectors", path.display())));
        }
        selector = Some(sel);
        let acc = rec[acc_col].trim();
        if acc.is_empty() {
            continue;
        }
        let round: usize = rec[round_col].parse().map_err(|_| field_err("round"))?;
        let acc: f64 = acc.parse().map_err(|_| field_err("test_accuracy"))?;
        curve.push((round, acc));
    }
    let selector = selector.ok_or_else(|| Error::Config(format!("{}: no rows", path.display())))?;
    Ok(MetricsFile { selector, curve })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub selector: SelectorKind,
    pub runs: usize,
    pub rounds_to_target: Option<usize>,
    /// Random's rounds over this selector's rounds.
    pub speedup: Option<f64>,
    pub final_smoothed_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub target_accuracy: f64,
    pub rows: Vec<SummaryRow>,
}

/// Mean accuracy per round over the runs, keeping rounds every run evaluated.
fn mean_curve(runs: &[&MetricsFile]) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in runs {
        for &(t, a) in &r.curve {
            let e = acc.entry(t).or_default();
            e.0 += a;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .filter(|(_, (_, n))| *n == runs.len())
        .map(|(t, (s, n))| (t, s / n as f64))
        .collect()
}

/// Runs of the same selector are averaged per round, then smoothed.
pub fn summarize(files: &[MetricsFile], target: f64) -> Result<Summary> {
    let mut by_sel: BTreeMap<SelectorKind, Vec<&MetricsFile>> = BTreeMap::new();
    for f in files {
        by_sel.entry(f.selector).or_default().push(f);
    }
    if !by_sel.contains_key(&SelectorKind::Random) {
        return Err(Error::Config("summarize needs at least one random-selector run as the baseline".into()));
    }
    let mut rows = Vec::new();
    for (sel, runs) in &by_sel {
        let curve = smooth_curve(&mean_curve(runs))?;
        rows.push(SummaryRow {
            selector: *sel,
            runs: runs.len(),
            rounds_to_target: rounds_to_target(&curve, target),
            speedup: None,
            final_smoothed_accuracy: curve.last().map_or(f64::NAN, |c| c.1),
        });
    }
    let base = rows.iter().find(|r| r.selector == SelectorKind::Random).and_then(|r| r.rounds_to_target);
    for r in &mut rows {
        r.speedup = match (base, r.rounds_to_target) {
            (Some(b), Some(m)) => Some(b as f64 / m as f64),
            _ => None,
        };
    }
    Ok(Summary {
        target_accuracy: target,
        rows,
    })
}

pub fn format_table(s: &Summary) -> String {
    let mut out = format!("target accuracy {}\n", s.target_accuracy);
    let _ = writeln!(out, "{:<20} {:>5} {:>8} {:>8} {:>10}", "selector", "runs", "rounds", "speedup", "final_acc");
    for r in &s.rows {
        let rounds = r.rounds_to_target.map_or("n/a".to_string(), |v| v.to_string());
        let speedup = r.speedup.map_or("n/a".to_string(), |v| format!("{v:.1}x"));
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>8} {:>8} {:>10.4}",
            r.selector.name(),
            r.runs,
            rounds,
            speedup,
            r.final_smoothed_accuracy
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(selector: SelectorKind, f: impl Fn(usize) -> f64) -> MetricsFile {
        MetricsFile {
            selector,
            curve: (1..=200).map(|t| (t, f(t))).collect(),
        }
    }

    #[test]
    fn identical_curves_give_unit_speedup() {
        let ramp = |t: usize| t as f64 / 200.0;
        let s = summarize(&[file(SelectorKind::Random, ramp), file(SelectorKind::Hics, ramp)], 0.5).unwrap();
        assert!(s.rows.iter().all(|r| r.speedup == Some(1.0)));
    }

    #[test]
    fn unreachable_target_is_na() {
        let s = summarize(&[file(SelectorKind::Random, |_| 0.3)], 0.9).unwrap();
        assert_eq!(s.rows[0].rounds_to_target, None);
        assert!(format_table(&s).contains("n/a"));
    }

    #[test]
    fn random_baseline_is_required() {
        assert!(summarize(&[file(SelectorKind::Hics, |_| 0.3)], 0.1).is_err());
    }

    #[test]
    fn runs_are_averaged_per_round() {
        let a = file(SelectorKind::Random, |_| 0.2);
        let b = file(SelectorKind::Random, |_| 0.4);
        let c = mean_curve(&[&a, &b]);
        assert!(c.iter().all(|&(_, v)| (v - 0.3).abs() < 1e-15));
    }
}
