//! Exact stop-and-wait analysis over the Gilbert channel.
//!
//! A packet of `x` bits is retransmitted every `t̂_out` bit-times until it
//! arrives intact. Its first transmission sees the stationary channel state;
//! the state across retransmissions evolves with the chain. The number of
//! attempts has a matrix-geometric law driven by the retry kernel
//!
//! ```text
//! S(x) = P^t̂_out - Q^x P^(t̂_out - x)
//! ```
//!
//! and long-run goodput follows from the renewal-reward theorem with one
//! cycle per delivered packet.

use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::channel::{
    GilbertParams, Matrix2, StateDist, matrix_power, stochastic_power, success_failure_power,
};
use crate::error::{Error, Result};
use crate::segmentation::{DiscreteMessageDist, PacketMix, SegmentationConfig, packet_mix};

/// Smallest `det(I - S)` treated as invertible.
pub const MIN_DETERMINANT: f64 = 1e-300;

/// Relative slack allowed when converting the timeout to whole bit-times.
pub const TIMEOUT_ROUNDING_TOL: f64 = 1e-6;

/// Link timing. Sizes in bits, times in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingConfig {
    capacity: f64,
    timeout_bits: u64,
    propagation: f64,
    ack_bits: u64,
    header_bits: u64,
}

impl TimingConfig {
    pub fn new(
        capacity_bps: f64,
        timeout_s: f64,
        propagation_s: f64,
        ack_bits: u64,
        header_bits: u64,
    ) -> Result<Self> {
        if !(capacity_bps.is_finite() && capacity_bps > 0.0) {
            return Err(Error::InvalidTiming(format!(
                "capacity must be positive, got {capacity_bps}"
            )));
        }
        if !(timeout_s.is_finite() && timeout_s > 0.0) {
            return Err(Error::InvalidTiming(format!(
                "timeout must be positive, got {timeout_s}"
            )));
        }
        if !(propagation_s.is_finite() && propagation_s >= 0.0) {
            return Err(Error::InvalidTiming(format!(
                "propagation delay must be nonnegative, got {propagation_s}"
            )));
        }
        let exact = timeout_s * capacity_bps;
        let rounded = exact.round();
        if rounded < 1.0 || (rounded - exact).abs() > TIMEOUT_ROUNDING_TOL * exact {
            return Err(Error::InvalidTiming(format!(
                "timeout x capacity = {exact} is not a whole number of bit-times"
            )));
        }
        Ok(Self {
            capacity: capacity_bps,
            timeout_bits: rounded as u64,
            propagation: propagation_s,
            ack_bits,
            header_bits,
        })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Timeout in bit-times.
    pub fn timeout_bits(&self) -> u64 {
        self.timeout_bits
    }

    pub fn timeout_seconds(&self) -> f64 {
        self.timeout_bits as f64 / self.capacity
    }

    pub fn propagation(&self) -> f64 {
        self.propagation
    }

    pub fn ack_bits(&self) -> u64 {
        self.ack_bits
    }

    pub fn header_bits(&self) -> u64 {
        self.header_bits
    }

    /// Time from the start of the successful attempt to the ACK arriving.
    pub fn success_time(&self, x: u64) -> f64 {
        (x + self.ack_bits) as f64 / self.capacity + self.propagation
    }

    /// Cycle time of a packet delivered on attempt `attempts`.
    pub fn cycle_time(&self, x: u64, attempts: u64) -> f64 {
        (attempts - 1) as f64 * self.timeout_seconds() + self.success_time(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomDetail {
    pub size: u64,
    pub weight: f64,
    pub mean_attempts: f64,
    pub mean_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodputReport {
    /// Bits per second.
    pub goodput: f64,
    pub mean_cycle_time: f64,
    /// Information bits per delivered packet.
    pub mean_reward: f64,
    pub atoms: Vec<AtomDetail>,
}

fn check_size(x: u64, t_out_bits: u64) -> Result<()> {
    if x == 0 {
        return Err(Error::InvalidSize("packet size must be at least one bit".into()));
    }
    if x > t_out_bits {
        return Err(Error::TimeoutTooShort {
            size: x,
            timeout: t_out_bits,
        });
    }
    Ok(())
}

/// `base^k` for possibly negative `base` and large `k`.
fn signed_pow(base: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let magnitude = base.abs().powf(k as f64);
    if base < 0.0 && k % 2 == 1 {
        -magnitude
    } else {
        magnitude
    }
}

/// Attempt-count model for one packet size.
#[derive(Debug, Clone)]
pub struct RetryModel {
    size: u64,
    pi: StateDist,
    kernel: Matrix2,
    /// `Q^x e`: per-state probability that an attempt succeeds.
    success: [f64; 2],
    /// `Q^x P^(t̂_out - x)`.
    delivered_then_idle: Matrix2,
    mixing: f64,
    det_success_timeout: f64,
}

impl RetryModel {
    pub fn new(x: u64, t_out_bits: u64, params: &GilbertParams) -> Result<Self> {
        check_size(x, t_out_bits)?;
        let pi = params.stationary()?;
        let (qx, fail) = success_failure_power(params, x);
        let idle = stochastic_power(&params.transition_matrix(), t_out_bits - x);
        let kernel = fail * idle;
        let sums = qx.row_sums();
        let rho = 1.0 - params.lambda() - params.gamma();
        let det_q = (1.0 - params.p_good()) * (1.0 - params.p_bad());
        Ok(Self {
            size: x,
            pi,
            kernel,
            success: [sums[0].min(1.0), sums[1].min(1.0)],
            delivered_then_idle: qx * idle,
            mixing: params.mixing_complement(t_out_bits),
            det_success_timeout: signed_pow(det_q, x) * signed_pow(rho, t_out_bits),
        })
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn kernel(&self) -> &Matrix2 {
        &self.kernel
    }

    /// Success probability of the first attempt.
    pub fn first_attempt_success(&self) -> f64 {
        self.pi.pi_good * self.success[0] + self.pi.pi_bad * self.success[1]
    }

    /// `Pr(N = n)` for `n >= 1`.
    pub fn pmf(&self, n: u64) -> f64 {
        assert!(n >= 1, "attempt counts start at 1");
        let v = matrix_power(&self.kernel, n - 1).left_mul(self.pi.as_row());
        (v[0] * self.success[0] + v[1] * self.success[1]).clamp(0.0, 1.0)
    }

    /// `Pr(N = 1), Pr(N = 2), ...` by vector iteration.
    pub fn pmf_iter(&self) -> impl Iterator<Item = f64> + '_ {
        let mut v = self.pi.as_row();
        std::iter::repeat_with(move || {
            let p = v[0] * self.success[0] + v[1] * self.success[1];
            v = self.kernel.left_mul(v);
            p.clamp(0.0, 1.0)
        })
    }

    /// `(Pr(N = n), Pr(N > n))` for `n = 1, 2, ...`. The survival term is
    /// `π S^n e`, accurate even after the PMF partial sums stall at rounding
    /// level.
    pub fn pmf_survival_iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut v = self.pi.as_row();
        std::iter::repeat_with(move || {
            let p = v[0] * self.success[0] + v[1] * self.success[1];
            v = self.kernel.left_mul(v);
            (p.clamp(0.0, 1.0), (v[0] + v[1]).clamp(0.0, 1.0))
        })
    }

    /// `E[N] = π (I - S)^{-1} e`.
    ///
    /// `I - S` is assembled as `c (I - Π) + Q^x P^(t̂_out - x)` with
    /// `c = 1 - ρ^t̂_out`, where `Π` has both rows equal to `π` and `ρ` is the
    /// second eigenvalue of `P`. Since `I - Π` is singular, its determinant
    /// and the adjugate product expand into sums of nonnegative terms, so no
    /// cancellation occurs when the success probability is tiny.
    pub fn mean_attempts(&self) -> Result<f64> {
        let b = self.delivered_then_idle.0;
        let (pg, pb) = (self.pi.pi_good, self.pi.pi_bad);
        let c = self.mixing;
        let det = c * (pb * b[1][1] + pg * b[0][0] + pb * b[1][0] + pg * b[0][1]) + self.det_success_timeout;
        if !(det.is_finite() && det > MIN_DETERMINANT) {
            return Err(Error::NoConvergence { size: self.size });
        }
        let numerator = c + pg * (b[1][1] - b[0][1]) + pb * (b[0][0] - b[1][0]);
        let mean = numerator / det;
        if !mean.is_finite() {
            return Err(Error::NoConvergence { size: self.size });
        }
        Ok(mean.max(1.0))
    }
}

/// `S(x, t̂_out) = P^t̂_out - Q^x P^(t̂_out - x)`, evaluated as
/// `P_f(x) P^(t̂_out - x)` with the failure matrix `P_f(x) = P^x - Q^x`.
pub fn retry_kernel(x: u64, t_out_bits: u64, params: &GilbertParams) -> Result<Matrix2> {
    check_size(x, t_out_bits)?;
    let (_, fail) = success_failure_power(params, x);
    Ok(fail * stochastic_power(&params.transition_matrix(), t_out_bits - x))
}

/// `Pr(N = n | x) = π S^(n-1) Q^x e`.
pub fn attempts_pmf(n: u64, x: u64, t_out_bits: u64, params: &GilbertParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSize("attempt count must be at least 1".into()));
    }
    Ok(RetryModel::new(x, t_out_bits, params)?.pmf(n))
}

/// Packet-error probability `1 - (1 - p_e)^x` under memoryless errors.
pub fn packet_error_prob_iid(x: u64, p_e: f64) -> f64 {
    -((x as f64) * (-p_e).ln_1p()).exp_m1()
}

/// Geometric attempt law under memoryless bit errors.
pub fn attempts_pmf_iid(n: u64, x: u64, p_e: f64) -> f64 {
    assert!(n >= 1, "attempt counts start at 1");
    let h = packet_error_prob_iid(x, p_e);
    (1.0 - h) * h.powf((n - 1) as f64)
}

pub fn mean_attempts(x: u64, t_out_bits: u64, params: &GilbertParams) -> Result<f64> {
    RetryModel::new(x, t_out_bits, params)?.mean_attempts()
}

/// `E[T | x] = t_out (E[N] - 1) + (x + ack) / capacity + t_pro`.
pub fn expected_time_given_size(x: u64, timing: &TimingConfig, params: &GilbertParams) -> Result<f64> {
    let mean = mean_attempts(x, timing.timeout_bits, params)?;
    Ok(timing.timeout_seconds() * (mean - 1.0) + timing.success_time(x))
}

pub fn goodput(mix: &PacketMix, timing: &TimingConfig, params: &GilbertParams) -> Result<GoodputReport> {
    if mix.header != timing.header_bits {
        return Err(Error::InvalidSize(format!(
            "packet mix header ({} bits) differs from timing header ({} bits)",
            mix.header, timing.header_bits
        )));
    }
    let atoms = mix
        .atoms()
        .into_iter()
        .map(|(size, weight)| {
            let mean_attempts = mean_attempts(size, timing.timeout_bits, params)?;
            let mean_time = timing.timeout_seconds() * (mean_attempts - 1.0) + timing.success_time(size);
            Ok(AtomDetail {
                size,
                weight,
                mean_attempts,
                mean_time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_cycle_time: f64 = atoms.iter().map(|a| a.weight * a.mean_time).sum();
    let mean_reward = mix.mean_size() - mix.header as f64;
    Ok(GoodputReport {
        goodput: mean_reward / mean_cycle_time,
        mean_cycle_time,
        mean_reward,
        atoms,
    })
}

/// Goodput for a message law cut at `payload` bits.
pub fn goodput_for_payload(
    dist: &DiscreteMessageDist,
    payload: u64,
    timing: &TimingConfig,
    params: &GilbertParams,
) -> Result<GoodputReport> {
    let cfg = SegmentationConfig::new(payload, timing.header_bits)?;
    goodput(&packet_mix(dist, &cfg), timing, params)
}

/// Goodput if every packet had the full size `payload + header`.
pub fn goodput_const_approx(
    payload: u64,
    header: u64,
    timing: &TimingConfig,
    params: &GilbertParams,
) -> Result<f64> {
    if payload == 0 {
        return Err(Error::InvalidSize("payload must be at least one bit".into()));
    }
    Ok(payload as f64 / expected_time_given_size(payload + header, timing, params)?)
}

/// Payload grid `start, start + step, ...` not exceeding the range end.
pub fn payload_grid(range: &RangeInclusive<u64>, step: u64) -> Result<Vec<u64>> {
    if step == 0 || range.is_empty() || *range.start() == 0 {
        return Err(Error::EmptyRange);
    }
    Ok(range.clone().step_by(step as usize).collect())
}

/// Exhaustive grid search for the goodput-maximizing payload (bits).
/// Ties go to the smaller payload.
pub fn optimal_payload(
    dist: &DiscreteMessageDist,
    header: u64,
    timing: &TimingConfig,
    params: &GilbertParams,
    payload_range: RangeInclusive<u64>,
    step: u64,
) -> Result<(u64, f64)> {
    if header != timing.header_bits {
        return Err(Error::InvalidSize("header differs from timing header".into()));
    }
    let grid = payload_grid(&payload_range, step)?;
    let last = *grid.last().expect("nonempty grid");
    if last + header > timing.timeout_bits {
        return Err(Error::TimeoutTooShort {
            size: last + header,
            timeout: timing.timeout_bits,
        });
    }
    let values = grid
        .par_iter()
        .map(|&d| goodput_for_payload(dist, d, timing, params).map(|r| (d, r.goodput)))
        .collect::<Result<Vec<_>>>()?;
    let mut best = values[0];
    for &(d, g) in &values[1..] {
        if g > best.1 {
            best = (d, g);
        }
    }
    Ok(best)
}
