//! Small statistics helpers used by the simulator and validation checks.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean.
///
/// Works on deviations from the first sample, so identical samples give
/// exactly that value and a zero standard error.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let Some(&shift) = samples.first() else {
        return (f64::NAN, f64::NAN);
    };
    let offset = samples.iter().map(|s| s - shift).sum::<f64>() / n;
    let mean = shift + offset;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|s| (s - shift - offset).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub bins: usize,
}

impl ChiSquareOutcome {
    pub fn passed(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Goodness of fit of attempt counts against `expected[n - 1] = Pr(N = n)`.
///
/// Bins `n = 1, 2, ...` are kept while their expected count is at least
/// `min_expected`; everything after is pooled into a tail bin, which is
/// merged into the last kept bin if it is itself too small.
pub fn chi_square_attempts(
    observed: &BTreeMap<u64, u64>,
    expected: &[f64],
    level: f64,
    min_expected: f64,
) -> ChiSquareOutcome {
    let total: u64 = observed.values().sum();
    let total_f = total as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut covered_p = 0.0;
    let mut covered_obs = 0u64;
    for (n, &p) in (1u64..).zip(expected) {
        if total_f * p < min_expected {
            break;
        }
        let obs = observed.get(&n).copied().unwrap_or(0);
        bins.push((obs as f64, total_f * p));
        covered_p += p;
        covered_obs += obs;
    }
    let tail_expected = total_f * (1.0 - covered_p).max(0.0);
    let tail_observed = (total - covered_obs) as f64;
    if tail_expected >= min_expected || bins.is_empty() {
        bins.push((tail_observed, tail_expected));
    } else if let Some(last) = bins.last_mut() {
        last.0 += tail_observed;
        last.1 += tail_expected;
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(o, e)| {
            if e > 0.0 {
                (o - e).powi(2) / e
            } else if o > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let dof = bins.len().saturating_sub(1);
    let critical = if dof == 0 {
        // A single bin carries no information; only an impossible observation fails.
        if statistic.is_finite() { f64::INFINITY } else { 0.0 }
    } else {
        ChiSquared::new(dof as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(1.0 - level)
    };
    ChiSquareOutcome {
        statistic,
        dof,
        critical,
        bins: bins.len(),
    }
}
