use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use fedsim_core::data::PartitionRecord;
use fedsim_core::engine::{run_experiment, thread_pool, write_run, ExperimentConfig, Federation};
use fedsim_core::estimator::EnvelopeFit;
use fedsim_core::harness::{assumption_harness, rank_fidelity};
use fedsim_core::{Error, Result};

use crate::config::{load_config, resolve, Overrides};
use crate::summary::{format_table, read_metrics, summarize};

/// Coverage the fitted envelope must reach.
pub const ENVELOPE_TARGET: f64 = 0.9;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn prepare(config: &Path, overrides: &Overrides) -> Result<(ExperimentConfig, PathBuf)> {
    let (cfg, out) = resolve(load_config(config)?, overrides)?;
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// One full run per seed; writes a metrics CSV and a manifest for each.
pub fn cmd_run(config: &Path, overrides: &Overrides) -> Result<Vec<PathBuf>> {
    let (cfg, out) = prepare(config, overrides)?;
    let pool = thread_pool()?;
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let run = pool.install(|| run_experiment(&cfg, seed))?;
        let (csv, manifest) = write_run(&run, &out)?;
        println!("{} seed {seed}: {}", cfg.selector, csv.display());
        written.extend([csv, manifest]);
    }
    Ok(written)
}

/// Per-client class counts as JSON and per-client label entropy as CSV.
pub fn cmd_partition(config: &Path, overrides: &Overrides) -> Result<Vec<PathBuf>> {
    let (cfg, out) = prepare(config, overrides)?;
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let fed = Federation::build(&cfg, seed)?;
        let records: Vec<PartitionRecord> = fed
            .clients
            .iter()
            .zip(&fed.cohorts)
            .enumerate()
            .map(|(k, (ds, &c))| PartitionRecord {
                client_id: k,
                class_counts: ds.class_counts().to_vec(),
                alpha_cohort: cfg.alphas[c],
            })
            .collect();
        let json = out.join(format!("partition_seed{seed}.json"));
        write_json(&json, &records)?;
        let csv_path = out.join(format!("client_entropy_seed{seed}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
        w.write_record(["client_id", "alpha_cohort", "num_samples", "entropy"]).map_err(csv_err)?;
        for (r, dist) in records.iter().zip(fed.distributions()?) {
            w.write_record([
                r.client_id.to_string(),
                r.alpha_cohort.to_string(),
                r.class_counts.iter().sum::<usize>().to_string(),
                dist.entropy.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        println!("seed {seed}: {} clients -> {}", records.len(), json.display());
        written.extend([json, csv_path]);
    }
    Ok(written)
}

/// True against estimated entropy once every client has reported a bias update.
pub fn cmd_estimate_entropy(config: &Path, overrides: &Overrides) -> Result<Vec<PathBuf>> {
    let (cfg, out) = prepare(config, overrides)?;
    let pool = thread_pool()?;
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let fid = pool.install(|| rank_fidelity(&cfg, seed))?;
        let path = out.join(format!("entropy_estimates_seed{seed}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["client_id", "true_entropy", "estimated_entropy", "round"]).map_err(csv_err)?;
        for r in &fid.rows {
            w.write_record([
                r.client_id.to_string(),
                r.true_entropy.to_string(),
                r.estimated_entropy.to_string(),
                r.round.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        println!("seed {seed}: spearman {:.4} -> {}", fid.spearman, path.display());
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct EnvelopeReport<'a> {
    seed: u64,
    num_points: usize,
    probe_rounds: &'a [usize],
    target_coverage: f64,
    fit: &'a EnvelopeFit,
    spearman: f64,
}

/// Probe before round 1 and every fifth round.
pub fn probe_rounds(rounds: usize) -> Vec<usize> {
    std::iter::once(1).chain((5..=rounds).step_by(5)).collect()
}

/// Entropy/gap scatter of every client plus the fitted envelope.
pub fn cmd_validate_assumption(config: &Path, overrides: &Overrides) -> Result<Vec<PathBuf>> {
    let (cfg, out) = prepare(config, overrides)?;
    let pool = thread_pool()?;
    let probes = probe_rounds(cfg.rounds);
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let rep = pool.install(|| assumption_harness(&cfg, seed, &probes, ENVELOPE_TARGET))?;
        let path = out.join(format!("assumption_scatter_seed{seed}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["client_id", "round", "entropy", "gap"]).map_err(csv_err)?;
        for p in &rep.points {
            w.write_record([
                p.client_id.map_or(String::new(), |c| c.to_string()),
                p.round.to_string(),
                p.entropy.to_string(),
                p.gap.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        let json = out.join(format!("envelope_seed{seed}.json"));
        write_json(
            &json,
            &EnvelopeReport {
                seed,
                num_points: rep.points.len(),
                probe_rounds: &probes,
                target_coverage: rep.target_coverage,
                fit: &rep.fit,
                spearman: rep.spearman,
            },
        )?;
        let p = rep.fit.params;
        println!(
            "seed {seed}: coverage {:.3} (beta {}, rho {:.3e}, kappa {:.3e}), spearman {:.3}",
            rep.fit.coverage, p.beta, p.rho, p.kappa, rep.spearman
        );
        written.extend([path, json]);
    }
    Ok(written)
}

/// Print the rounds-to-target table; with `out`, also write `summary.json`.
pub fn cmd_summarize(files: &[PathBuf], target: f64, out: Option<&Path>) -> Result<String> {
    if files.is_empty() {
        return Err(Error::Config("summarize needs at least one metrics CSV".into()));
    }
    if !target.is_finite() {
        return Err(Error::Config(format!("target accuracy must be finite, got {target}")));
    }
    let runs = files.iter().map(|p| read_metrics(p)).collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs, target)?;
    let table = format_table(&summary);
    print!("{table}");
    std::io::stdout().flush()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(table)
}
