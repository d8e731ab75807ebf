//! The simulator and the closed forms checked against each other.

use std::collections::BTreeMap;

use goodput_core::sim::{
    self, free_running_errors, replication_rng, simulate_packet, simulate_packet_per_bit,
};
use goodput_core::stats::{chi_square_attempts, mean_and_stderr};
use goodput_core::{
    BitState, DiscreteMessageDist, GilbertParams, SegmentationConfig, SimConfig, StateMode, TimingConfig,
    attempts_pmf, attempts_pmf_iid, edge_probability, goodput_for_payload, matrix_power, packet_mix,
    segment_message, skip_ahead_state,
};
use rand::RngExt;

fn defaults(header_bytes: u64) -> TimingConfig {
    TimingConfig::new(1e6, 0.1, 1e-3, 38 * 8, header_bytes * 8).unwrap()
}

/// Attempt counts for `packets` packets each starting from a stationary state.
fn attempt_counts(
    packets: u64,
    x: u64,
    timing: &TimingConfig,
    params: &GilbertParams,
    seed: u64,
    per_bit: bool,
) -> BTreeMap<u64, u64> {
    let pi = params.stationary().unwrap();
    let mut rng = replication_rng(seed, 0);
    let mut counts = BTreeMap::new();
    for _ in 0..packets {
        let mut state = sim::draw_stationary(&mut rng, &pi);
        let (n, _) = if per_bit {
            simulate_packet_per_bit(x, timing, params, &mut rng, &mut state).unwrap()
        } else {
            simulate_packet(x, timing, params, &mut rng, &mut state).unwrap()
        };
        *counts.entry(n).or_insert(0) += 1;
    }
    counts
}

#[test]
fn per_bit_and_sojourn_walkers_match_the_attempts_pmf() {
    // Short timeout so that the chain state carries over between attempts.
    let params = GilbertParams::new(0.02, 0.2, 0.0, 1.0).unwrap();
    let timing = TimingConfig::new(64.0, 1.0, 0.0, 0, 0).unwrap();
    let expected: Vec<f64> = (1..=200)
        .map(|n| attempts_pmf(n, 16, 64, &params).unwrap())
        .collect();
    for per_bit in [true, false] {
        let counts = attempt_counts(100_000, 16, &timing, &params, 11, per_bit);
        let chi = chi_square_attempts(&counts, &expected, 0.001, 5.0);
        assert!(chi.passed(), "per_bit={per_bit}: {chi:?}");
        assert!(chi.dof >= 5);
    }
}

#[test]
fn iid_histogram_is_geometric() {
    let params = GilbertParams::iid(0.01).unwrap();
    let timing = TimingConfig::new(1e6, 0.1, 0.0, 0, 0).unwrap();
    let counts = attempt_counts(100_000, 100, &timing, &params, 3, false);
    let expected: Vec<f64> = (1..=300).map(|n| attempts_pmf_iid(n, 100, 0.01)).collect();
    let chi = chi_square_attempts(&counts, &expected, 0.001, 5.0);
    assert!(chi.passed(), "{chi:?}");
}

#[test]
fn skip_ahead_follows_the_matrix_power_row() {
    let params = GilbertParams::new(0.1, 0.3, 0.0, 1.0).unwrap();
    let target = matrix_power(&params.transition_matrix(), 10).get(0, 1);
    let mut rng = replication_rng(5, 0);
    let draws = 1_000_000u64;
    let bad = (0..draws)
        .filter(|_| skip_ahead_state(BitState::Good, 10, &params, &mut rng) == BitState::Bad)
        .count() as f64;
    let sigma = (target * (1.0 - target) / draws as f64).sqrt();
    assert!((bad / draws as f64 - target).abs() <= 3.0 * sigma);
}

#[test]
fn free_running_chain_has_the_mean_ber() {
    let params = GilbertParams::new(1e-3, 0.05, 1e-3, 0.2).unwrap();
    let pi = params.stationary().unwrap();
    let mut rng = replication_rng(9, 0);
    // 100 independent batches of 10^5 bits; batch means absorb the burst correlation.
    let rates: Vec<f64> = (0..100)
        .map(|_| {
            let start = sim::draw_stationary(&mut rng, &pi);
            free_running_errors(100_000, &params, &mut rng, start) as f64 / 1e5
        })
        .collect();
    let (mean, stderr) = mean_and_stderr(&rates);
    let p_e = params.mean_ber().unwrap();
    assert!((mean - p_e).abs() <= 3.0 * stderr, "{mean} vs {p_e} ± {stderr}");
}

#[test]
fn edge_frequency_matches_the_packet_mix() {
    let dist = DiscreteMessageDist::new([(8_000, 0.5), (20_000, 0.3), (32_000, 0.2)]).unwrap();
    let cfg = SegmentationConfig::new(12_000, 304).unwrap();
    let mix = packet_mix(&dist, &cfg);
    let mut rng = replication_rng(21, 0);
    let mut sizes: BTreeMap<u64, u64> = BTreeMap::new();
    let (mut edges, mut packets) = (0u64, 0u64);
    for _ in 0..100_000 {
        let u = rng.random::<f64>();
        let msg = if u < 0.5 {
            8_000
        } else if u < 0.8 {
            20_000
        } else {
            32_000
        };
        let parts = segment_message(msg, cfg.payload());
        edges += 1;
        packets += parts.len() as u64;
        for info in parts {
            *sizes.entry(info + cfg.header()).or_insert(0) += 1;
        }
    }
    let n = packets as f64;
    let pe = edge_probability(&dist, cfg.payload());
    let se = (pe * (1.0 - pe) / n).sqrt();
    assert!((edges as f64 / n - pe).abs() <= 3.0 * se);
    for (size, w) in mix.atoms() {
        let freq = sizes.get(&size).copied().unwrap_or(0) as f64 / n;
        let se = (w * (1.0 - w) / n).sqrt();
        assert!((freq - w).abs() <= 3.0 * se, "size {size}: {freq} vs {w}");
    }
    assert_eq!(sizes.len(), mix.atoms().len());
}

fn run_at(params: &GilbertParams, mode: StateMode, seed: u64) -> goodput_core::SimReport {
    let dist = DiscreteMessageDist::constant(32_000).unwrap();
    let cfg = SegmentationConfig::new(12_000, 304).unwrap();
    let sim = SimConfig::new(100_000, 10, seed, mode).unwrap();
    sim::run(&sim, &dist, &cfg, &defaults(38), params).unwrap()
}

#[test]
fn simulated_goodput_agrees_with_analysis_iid() {
    let params = GilbertParams::iid(1e-4).unwrap();
    let report = run_at(&params, StateMode::StationaryPerPacket, 1);
    let dist = DiscreteMessageDist::constant(32_000).unwrap();
    let exact = goodput_for_payload(&dist, 12_000, &defaults(38), &params)
        .unwrap()
        .goodput;
    assert!(report.packets_observed >= 1_000_000);
    assert!(
        (report.goodput_est - exact).abs() <= 3.0 * report.goodput_stderr,
        "{} ± {} vs {exact}",
        report.goodput_est,
        report.goodput_stderr
    );
}

#[test]
fn continuous_mode_matches_stationary_mode_for_memoryless_chain() {
    let params = GilbertParams::iid(1e-4).unwrap();
    let a = run_at(&params, StateMode::StationaryPerPacket, 2);
    let b = run_at(&params, StateMode::Continuous, 3);
    let sigma = (a.goodput_stderr.powi(2) + b.goodput_stderr.powi(2)).sqrt();
    assert!((a.goodput_est - b.goodput_est).abs() <= 3.0 * sigma);
}

#[test]
fn error_free_simulation_is_exact() {
    let params = GilbertParams::new(0.0, 0.5, 0.0, 1.0).unwrap();
    let dist = DiscreteMessageDist::constant(32_000).unwrap();
    let cfg = SegmentationConfig::new(12_000, 304).unwrap();
    let sim = SimConfig::new(1_000, 3, 4, StateMode::StationaryPerPacket).unwrap();
    let report = sim::run(&sim, &dist, &cfg, &defaults(38), &params).unwrap();
    let exact = goodput_for_payload(&dist, 12_000, &defaults(38), &params)
        .unwrap()
        .goodput;
    assert_eq!(report.goodput_stderr, 0.0);
    assert!((report.goodput_est - exact).abs() <= 1e-9 * exact);
    assert_eq!(report.attempts_hist.get(&1), Some(&1.0));
}

#[test]
fn fixed_seed_is_reproducible_serial_and_parallel() {
    let params = GilbertParams::from_mean_ber_and_burst(1e-4, 100.0).unwrap();
    let dist = DiscreteMessageDist::new([(8_000, 0.4), (32_000, 0.6)]).unwrap();
    let cfg = SegmentationConfig::new(12_000, 304).unwrap();
    let sim = SimConfig::new(5_000, 4, 77, StateMode::Continuous).unwrap();
    let a = sim::run(&sim, &dist, &cfg, &defaults(38), &params).unwrap();
    let b = sim::run(&sim, &dist, &cfg, &defaults(38), &params).unwrap();
    let c = sim::run(&sim.serial(), &dist, &cfg, &defaults(38), &params).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    let d = sim::run(
        &SimConfig { seed: 78, ..sim },
        &dist,
        &cfg,
        &defaults(38),
        &params,
    )
    .unwrap();
    assert_ne!(a.replication_goodputs, d.replication_goodputs);
}
