//! Monte Carlo stop-and-wait simulator, independent of the analytic module.
//!
//! The channel is walked bit by bit in distribution: inside a packet the
//! simulator samples how long the chain stays in its current state and where
//! the first corrupted bit falls (both geometric), which is exact for the
//! per-bit model and costs a few draws per state change instead of per bit.
//! [`simulate_packet_per_bit`] keeps a literal one-draw-per-bit walker as a
//! reference. Across the idle part of a timeout the state is resampled from
//! the corresponding row of `P^k`.
//!
//! Each replication owns a ChaCha8 stream selected by `(seed, replication)`,
//! so serial and parallel runs produce identical reports.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::TimingConfig;
use crate::channel::{BitState, GilbertParams, StateDist, matrix_power};
use crate::error::{Error, Result};
use crate::segmentation::{DiscreteMessageDist, SegmentationConfig, segment_message};
use crate::stats::mean_and_stderr;

/// Attempts after which a packet is declared undeliverable.
pub const RETRY_CAP: u64 = 10_000_000;

/// Channel state seen by each packet's first transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMode {
    /// Fresh stationary draw per packet.
    StationaryPerPacket,
    /// The channel keeps running between packets.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Minimum packets per replication; a replication finishes its last message.
    pub packets_per_rep: u64,
    pub replications: u64,
    pub seed: u64,
    pub state_mode: StateMode,
    pub parallel: bool,
}

impl SimConfig {
    pub fn new(packets_per_rep: u64, replications: u64, seed: u64, state_mode: StateMode) -> Result<Self> {
        if packets_per_rep == 0 {
            return Err(Error::InvalidSimConfig(
                "packets_per_rep must be at least 1".into(),
            ));
        }
        if replications < 2 {
            return Err(Error::InvalidSimConfig(
                "at least 2 replications are needed for a standard error".into(),
            ));
        }
        Ok(Self {
            packets_per_rep,
            replications,
            seed,
            state_mode,
            parallel: true,
        })
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    /// Mean of the per-replication goodputs, bits per second.
    pub goodput_est: f64,
    pub goodput_stderr: f64,
    pub attempts_hist: BTreeMap<u64, f64>,
    pub attempts_counts: BTreeMap<u64, u64>,
    pub mean_cycle_est: f64,
    pub packets_observed: u64,
    pub replication_goodputs: Vec<f64>,
}

/// RNG stream for one replication.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Number of Bernoulli(`q`) trials up to and including the first success.
fn geometric<R: RngExt + ?Sized>(rng: &mut R, q: f64) -> u64 {
    if q <= 0.0 {
        return u64::MAX;
    }
    if q >= 1.0 {
        return 1;
    }
    let u = 1.0 - rng.random::<f64>();
    let trials = (u.ln() / (-q).ln_1p()).floor() + 1.0;
    if trials >= u64::MAX as f64 {
        u64::MAX
    } else {
        trials as u64
    }
}

fn draw_state<R: RngExt + ?Sized>(rng: &mut R, pi_bad: f64) -> BitState {
    if rng.random::<f64>() < pi_bad {
        BitState::Bad
    } else {
        BitState::Good
    }
}

pub fn draw_stationary<R: RngExt + ?Sized>(rng: &mut R, pi: &StateDist) -> BitState {
    draw_state(rng, pi.pi_bad)
}

/// Channel state `k` bit-times after `state`.
pub fn skip_ahead_state<R: RngExt + ?Sized>(
    state: BitState,
    k: u64,
    params: &GilbertParams,
    rng: &mut R,
) -> BitState {
    if k == 0 {
        return state;
    }
    let row = matrix_power(&params.transition_matrix(), k).row(state.index());
    draw_state(rng, row[1])
}

/// One transmission of `x` bits. Returns whether it arrived intact and how
/// many bit-times elapsed (up to the first corrupted bit on failure);
/// `state` ends as the chain state after those bits.
fn transmit_sojourn<R: RngExt + ?Sized>(
    x: u64,
    params: &GilbertParams,
    rng: &mut R,
    state: &mut BitState,
) -> (bool, u64) {
    let mut used = 0u64;
    loop {
        let s = *state;
        let remaining = x - used;
        let run = geometric(rng, params.leave_rate(s));
        let first_error = geometric(rng, params.error_rate(s));
        if first_error <= run.min(remaining) {
            if first_error == run {
                *state = s.other();
            }
            return (false, used + first_error);
        }
        if run > remaining {
            return (true, x);
        }
        *state = s.other();
        used += run;
        if used == x {
            return (true, x);
        }
    }
}

fn transmit_per_bit<R: RngExt + ?Sized>(
    x: u64,
    params: &GilbertParams,
    rng: &mut R,
    state: &mut BitState,
) -> (bool, u64) {
    for bit in 1..=x {
        let s = *state;
        let errored = rng.random::<f64>() < params.error_rate(s);
        if rng.random::<f64>() < params.leave_rate(s) {
            *state = s.other();
        }
        if errored {
            return (false, bit);
        }
    }
    (true, x)
}

type Transmit<R> = fn(u64, &GilbertParams, &mut R, &mut BitState) -> (bool, u64);

fn retransmit_until_delivered<R: RngExt + ?Sized>(
    x: u64,
    timing: &TimingConfig,
    params: &GilbertParams,
    rng: &mut R,
    state: &mut BitState,
    transmit: Transmit<R>,
) -> Result<(u64, f64)> {
    let t_out = timing.timeout_bits();
    if x > t_out {
        return Err(Error::TimeoutTooShort {
            size: x,
            timeout: t_out,
        });
    }
    let mut attempts = 1u64;
    loop {
        let (ok, used) = transmit(x, params, rng, state);
        if ok {
            return Ok((attempts, timing.cycle_time(x, attempts)));
        }
        if attempts >= RETRY_CAP {
            return Err(Error::RetryCap {
                size: x,
                cap: RETRY_CAP,
            });
        }
        *state = skip_ahead_state(*state, t_out - used, params, rng);
        attempts += 1;
    }
}

/// Sends one packet of `x` bits until it is delivered.
///
/// `state` is the channel state at the first bit on entry and the state right
/// after the delivered copy on exit.
pub fn simulate_packet<R: RngExt + ?Sized>(
    x: u64,
    timing: &TimingConfig,
    params: &GilbertParams,
    rng: &mut R,
    state: &mut BitState,
) -> Result<(u64, f64)> {
    retransmit_until_delivered(x, timing, params, rng, state, transmit_sojourn::<R>)
}

/// [`simulate_packet`] with one error draw and one transition draw per bit.
pub fn simulate_packet_per_bit<R: RngExt + ?Sized>(
    x: u64,
    timing: &TimingConfig,
    params: &GilbertParams,
    rng: &mut R,
    state: &mut BitState,
) -> Result<(u64, f64)> {
    retransmit_until_delivered(x, timing, params, rng, state, transmit_per_bit::<R>)
}

/// Counts bit errors over `bits` steps of the free-running chain.
pub fn free_running_errors<R: RngExt + ?Sized>(
    bits: u64,
    params: &GilbertParams,
    rng: &mut R,
    mut state: BitState,
) -> u64 {
    let mut errors = 0;
    for _ in 0..bits {
        if rng.random::<f64>() < params.error_rate(state) {
            errors += 1;
        }
        if rng.random::<f64>() < params.leave_rate(state) {
            state = state.other();
        }
    }
    errors
}

struct MessageSampler {
    cumulative: Vec<f64>,
    sizes: Vec<u64>,
}

impl MessageSampler {
    fn new(dist: &DiscreteMessageDist) -> Self {
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(dist.atoms().len());
        for &(_, w) in dist.atoms() {
            acc += w;
            cumulative.push(acc);
        }
        Self {
            cumulative,
            sizes: dist.atoms().iter().map(|a| a.0).collect(),
        }
    }

    fn sample<R: RngExt + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.sizes.len() == 1 {
            return self.sizes[0];
        }
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.sizes[idx.min(self.sizes.len() - 1)]
    }
}

#[derive(Debug, Default)]
struct ReplicationTally {
    info_bits: u128,
    bit_times: u128,
    packets: u64,
    attempts: BTreeMap<u64, u64>,
}

impl ReplicationTally {
    fn elapsed(&self, timing: &TimingConfig) -> f64 {
        self.bit_times as f64 / timing.capacity() + self.packets as f64 * timing.propagation()
    }
}

#[allow(clippy::too_many_arguments)]
fn run_replication(
    rep: u64,
    sim: &SimConfig,
    sampler: &MessageSampler,
    cfg: &SegmentationConfig,
    timing: &TimingConfig,
    params: &GilbertParams,
    pi: &StateDist,
) -> Result<ReplicationTally> {
    let mut rng = replication_rng(sim.seed, rep);
    let mut tally = ReplicationTally::default();
    let gap_bits = timing.ack_bits() + (timing.propagation() * timing.capacity()).round() as u64;
    let mut state = draw_stationary(&mut rng, pi);
    // Replications end on a message boundary; cutting a message short would
    // over-weight body packets by O(1/packets).
    while tally.packets < sim.packets_per_rep {
        let message = sampler.sample(&mut rng);
        for info in segment_message(message, cfg.payload()) {
            let x = info + cfg.header();
            if sim.state_mode == StateMode::StationaryPerPacket {
                state = draw_stationary(&mut rng, pi);
            }
            let (attempts, _) = simulate_packet(x, timing, params, &mut rng, &mut state)?;
            if sim.state_mode == StateMode::Continuous {
                state = skip_ahead_state(state, gap_bits, params, &mut rng);
            }
            tally.info_bits += info as u128;
            tally.bit_times +=
                (attempts - 1) as u128 * timing.timeout_bits() as u128 + (x + timing.ack_bits()) as u128;
            tally.packets += 1;
            *tally.attempts.entry(attempts).or_insert(0) += 1;
        }
    }
    Ok(tally)
}

/// Replicated simulation of segmented messages over stop-and-wait.
pub fn run(
    sim: &SimConfig,
    dist: &DiscreteMessageDist,
    cfg: &SegmentationConfig,
    timing: &TimingConfig,
    params: &GilbertParams,
) -> Result<SimReport> {
    if cfg.header() != timing.header_bits() {
        return Err(Error::InvalidSize(
            "segmentation header differs from timing header".into(),
        ));
    }
    let largest = cfg.payload().min(dist.max_size()) + cfg.header();
    if largest > timing.timeout_bits() {
        return Err(Error::TimeoutTooShort {
            size: largest,
            timeout: timing.timeout_bits(),
        });
    }
    let pi = params.stationary()?;
    let sampler = MessageSampler::new(dist);
    let one = |rep| run_replication(rep, sim, &sampler, cfg, timing, params, &pi);
    let tallies: Vec<ReplicationTally> = if sim.parallel {
        (0..sim.replications)
            .into_par_iter()
            .map(one)
            .collect::<Result<_>>()?
    } else {
        (0..sim.replications).map(one).collect::<Result<_>>()?
    };

    let goodputs: Vec<f64> = tallies
        .iter()
        .map(|t| t.info_bits as f64 / t.elapsed(timing))
        .collect();
    let (goodput_est, goodput_stderr) = mean_and_stderr(&goodputs);
    let packets_observed: u64 = tallies.iter().map(|t| t.packets).sum();
    let total_elapsed: f64 = tallies.iter().map(|t| t.elapsed(timing)).sum();
    let mut attempts_counts: BTreeMap<u64, u64> = BTreeMap::new();
    for t in &tallies {
        for (&n, &c) in &t.attempts {
            *attempts_counts.entry(n).or_insert(0) += c;
        }
    }
    let attempts_hist = attempts_counts
        .iter()
        .map(|(&n, &c)| (n, c as f64 / packets_observed as f64))
        .collect();
    Ok(SimReport {
        goodput_est,
        goodput_stderr,
        attempts_hist,
        attempts_counts,
        mean_cycle_est: total_elapsed / packets_observed as f64,
        packets_observed,
        replication_goodputs: goodputs,
    })
}
