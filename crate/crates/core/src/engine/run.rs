use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{write_metrics_csv, RoundMetrics};
use super::simulation::{CostTotals, Simulation};
use crate::error::Result;
use crate::selector::SelectorKind;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub build_id: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            build_id: option_env!("FEDSIM_BUILD_ID").unwrap_or("dev").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorCost {
    pub selector: SelectorKind,
    pub model_params: usize,
    pub num_classes: usize,
    #[serde(flatten)]
    pub totals: CostTotals,
    /// Clustered sampling only: whether full update vectors were compared.
    pub cs_full_updates: Option<bool>,
}

/// Everything needed to identify and repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub cost: SelectorCost,
    pub environment: Environment,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<RoundMetrics>,
    pub manifest: RunManifest,
}

/// Run `cfg` with `seed` from start to finish.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg.clone(), seed)?;
    let metrics = sim.run()?;
    let mut echo = cfg.clone();
    echo.seeds = vec![seed];
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        cost: SelectorCost {
            selector: cfg.selector,
            model_params: sim.model().num_params(),
            num_classes: sim.model().num_classes(),
            totals: sim.cost(),
            cs_full_updates: (cfg.selector == SelectorKind::ClusteredSampling).then_some(sim.cs_full_updates()),
        },
        config: echo,
        environment: Environment::current(),
    };
    Ok(RunOutput { metrics, manifest })
}

pub fn metrics_file_name(selector: SelectorKind, seed: u64) -> String {
    format!("metrics_{selector}_seed{seed}.csv")
}

pub fn manifest_file_name(selector: SelectorKind, seed: u64) -> String {
    format!("manifest_{selector}_seed{seed}.json")
}

/// Write the metrics CSV and manifest into `dir`; returns both paths.
pub fn write_run(output: &RunOutput, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let m = &output.manifest;
    let csv_path = dir.join(metrics_file_name(m.config.selector, m.seed));
    write_metrics_csv(&output.metrics, fs::File::create(&csv_path)?)?;
    let manifest_path = dir.join(manifest_file_name(m.config.selector, m.seed));
    fs::write(&manifest_path, serde_json::to_string_pretty(m)? + "\n")?;
    Ok((csv_path, manifest_path))
}

/// Worker pool sized by `FEDSIM_THREADS` when set, else by rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FEDSIM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| crate::Error::Config(format!("FEDSIM_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| crate::Error::Config(format!("cannot start worker pool: {e}")))
}
