//! Round orchestration, evaluation, run outputs and curve post-processing.

mod config;
mod metrics;
mod run;
mod simulation;

pub use config::{DatasetSpec, ExperimentConfig, CS_FULL_UPDATE_LIMIT};
pub use metrics::{
    accuracy_curve, argmax, evaluate, rounds_to_target, savitzky_golay, smooth_curve, system_heterogeneity,
    write_metrics_csv, RoundMetrics, Smoothed, CSV_HEADER, SMOOTHING_ORDER, SMOOTHING_WINDOW,
};
pub use run::{
    manifest_file_name, metrics_file_name, run_experiment, thread_pool, write_run, Environment, RunManifest,
    RunOutput, SelectorCost, MANIFEST_VERSION,
};
pub use simulation::{aggregate, CostTotals, Federation, Simulation};
