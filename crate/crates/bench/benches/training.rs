use criterion::{criterion_group, criterion_main, Criterion};

use fedsim_bench::warm_simulation;
use fedsim_core::engine::{savitzky_golay, ExperimentConfig};
use fedsim_core::selector::SelectorKind;

fn local_training(c: &mut Criterion) {
    let sim = warm_simulation(ExperimentConfig::default());
    c.bench_function("local_updates_5_clients", |b| b.iter(|| sim.local_updates(20, &[0, 11, 22, 33, 44]).unwrap()));
}

fn federated_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("round");
    group.sample_size(10);
    for sel in [SelectorKind::Random, SelectorKind::Hics, SelectorKind::PowD] {
        let cfg = ExperimentConfig {
            selector: sel,
            ..ExperimentConfig::default()
        };
        let mut sim = warm_simulation(cfg);
        group.bench_function(sel.name(), |b| b.iter(|| sim.step().unwrap()));
    }
    group.finish();
}

fn smoothing(c: &mut Criterion) {
    let series: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.01).sin()).collect();
    c.bench_function("savitzky_golay_1000", |b| b.iter(|| savitzky_golay(&series, 13, 3).unwrap()));
}

criterion_group!(benches, local_training, federated_round, smoothing);
criterion_main!(benches);
