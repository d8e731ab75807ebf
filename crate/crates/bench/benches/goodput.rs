use criterion::{Criterion, criterion_group, criterion_main};
use goodput_core::analysis::{RetryModel, goodput_for_payload};
use goodput_core::sim::{SimConfig, StateMode, run};
use goodput_core::{DiscreteMessageDist, GilbertParams, SegmentationConfig, TimingConfig, matrix_power};
use std::hint::black_box;

fn timing() -> TimingConfig {
    TimingConfig::new(1e6, 0.1, 1e-3, 304, 304).unwrap()
}

fn analytic(c: &mut Criterion) {
    let params = GilbertParams::from_mean_ber_and_burst(1e-4, 100.0).unwrap();
    let p = params.transition_matrix();
    c.bench_function("matrix_power 1e5", |b| {
        b.iter(|| matrix_power(black_box(&p), 100_000))
    });
    c.bench_function("mean_attempts 12304 bits", |b| {
        b.iter(|| {
            RetryModel::new(black_box(12_304), 100_000, &params)
                .unwrap()
                .mean_attempts()
        })
    });
    let dist = DiscreteMessageDist::constant(32_000).unwrap();
    let t = timing();
    c.bench_function("goodput sweep 391 points", |b| {
        b.iter(|| {
            (800..=32_000u64)
                .step_by(80)
                .map(|d| goodput_for_payload(&dist, d, &t, &params).unwrap().goodput)
                .sum::<f64>()
        })
    });
}

fn simulation(c: &mut Criterion) {
    let params = GilbertParams::iid(1e-4).unwrap();
    let dist = DiscreteMessageDist::constant(32_000).unwrap();
    let cfg = SegmentationConfig::new(12_000, 304).unwrap();
    let sim = SimConfig::new(10_000, 2, 1, StateMode::StationaryPerPacket)
        .unwrap()
        .serial();
    let t = timing();
    let mut group = c.benchmark_group("simulator");
    group.sample_size(10);
    group.bench_function("20k packets at 1e-4", |b| {
        b.iter(|| run(&sim, &dist, &cfg, &t, &params).unwrap().goodput_est)
    });
    group.finish();
}

criterion_group!(benches, analytic, simulation);
criterion_main!(benches);
