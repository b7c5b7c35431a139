//! Shared fixtures for the benchmarks.

use fedsim_core::engine::{ExperimentConfig, Simulation};

/// Simulation advanced by `ceil(N / K)` rounds, which completes the warm-up
/// of the selectors that have one.
pub fn warm_simulation(cfg: ExperimentConfig) -> Simulation {
    let rounds = cfg.num_clients.div_ceil(cfg.clients_per_round);
    let mut sim = Simulation::new(cfg, 0).expect("valid config");
    for _ in 0..rounds {
        sim.step().expect("round runs");
    }
    sim
}

/// Deterministic pseudo-random vectors without pulling in an RNG crate.
pub fn vectors(count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| (0..dim).map(|j| (((i * 7919 + j * 104_729) % 1000) as f64 / 500.0) - 1.0).collect())
        .collect()
}
