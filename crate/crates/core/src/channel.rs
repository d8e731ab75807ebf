//! Two-state Markov (Gilbert) bit-error channel.
//!
//! The chain advances one step per bit. In each state bits err independently
//! with that state's rate, so a bit sent while the chain is in state `s` is
//! corrupted with probability `p_s` and then the chain transitions.

use std::ops::{Mul, Sub};

use crate::error::{Error, Result, check_probability};

/// Channel state of one bit-time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitState {
    Good,
    Bad,
}

impl BitState {
    pub fn index(self) -> usize {
        match self {
            BitState::Good => 0,
            BitState::Bad => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            BitState::Good => BitState::Bad,
            BitState::Bad => BitState::Good,
        }
    }
}

/// The four per-bit parameters of the Gilbert model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GilbertParams {
    lambda: f64,
    gamma: f64,
    p_good: f64,
    p_bad: f64,
}

impl GilbertParams {
    /// `lambda` is the per-bit G→B probability, `gamma` the per-bit B→G
    /// probability, `p_good`/`p_bad` the bit-error rates in each state.
    pub fn new(lambda: f64, gamma: f64, p_good: f64, p_bad: f64) -> Result<Self> {
        Ok(Self {
            lambda: check_probability("lambda", lambda)?,
            gamma: check_probability("gamma", gamma)?,
            p_good: check_probability("p_good", p_good)?,
            p_bad: check_probability("p_bad", p_bad)?,
        })
    }

    /// Memoryless errors at rate `p_e`, written in the G-clean/B-dirty form
    /// (`p_good = 0`, `p_bad = 1`) with `lambda + gamma = 1`.
    pub fn iid(p_e: f64) -> Result<Self> {
        let p_e = check_probability("p_e", p_e)?;
        if p_e >= 1.0 {
            return Err(Error::InvalidRate("mean bit-error rate must be below 1".into()));
        }
        Self::new(p_e, 1.0 - p_e, 0.0, 1.0)
    }

    /// Inverts the mean-BER relation for a channel with error-free G and
    /// always-erring B states, given the mean B sojourn (`1/gamma`) in bits.
    pub fn from_mean_ber_and_burst(p_e: f64, burst_len: f64) -> Result<Self> {
        if !(p_e.is_finite() && p_e > 0.0 && p_e < 1.0) {
            return Err(Error::InvalidRate(format!(
                "mean bit-error rate must lie in (0, 1), got {p_e}"
            )));
        }
        if !(burst_len.is_finite() && burst_len >= 1.0) {
            return Err(Error::InvalidRate(format!(
                "mean burst length must be at least 1 bit, got {burst_len}"
            )));
        }
        let gamma = 1.0 / burst_len;
        let lambda = gamma * p_e / (1.0 - p_e);
        if lambda > 1.0 {
            return Err(Error::InvalidRate(format!(
                "mean BER {p_e} with burst length {burst_len} needs lambda = {lambda} > 1"
            )));
        }
        Self::new(lambda, gamma, 0.0, 1.0)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p_good(&self) -> f64 {
        self.p_good
    }

    pub fn p_bad(&self) -> f64 {
        self.p_bad
    }

    /// Bit-error rate while the chain sits in `state`.
    pub fn error_rate(&self, state: BitState) -> f64 {
        match state {
            BitState::Good => self.p_good,
            BitState::Bad => self.p_bad,
        }
    }

    /// Probability of leaving `state` after one bit.
    pub fn leave_rate(&self, state: BitState) -> f64 {
        match state {
            BitState::Good => self.lambda,
            BitState::Bad => self.gamma,
        }
    }

    /// True in the cases where the chain reduces to memoryless errors:
    /// `lambda = 0`, `gamma = 0` or `lambda + gamma = 1`.
    pub fn is_iid_equivalent(&self) -> bool {
        self.lambda == 0.0 || self.gamma == 0.0 || (self.lambda + self.gamma - 1.0).abs() < 1e-15
    }

    pub fn transition_matrix(&self) -> Matrix2 {
        transition_matrix(self)
    }

    pub fn success_matrix(&self) -> Matrix2 {
        success_matrix(self)
    }

    pub fn stationary(&self) -> Result<StateDist> {
        stationary(self)
    }

    pub fn mean_ber(&self) -> Result<f64> {
        mean_ber(self)
    }

    /// `1 - (1 - lambda - gamma)^k`, the weight of `I - Π` in `I - P^k`.
    ///
    /// Evaluated without forming `P^k`, so it keeps full relative precision
    /// when the second eigenvalue is close to one.
    pub(crate) fn mixing_complement(&self, k: u64) -> f64 {
        let sum = self.lambda + self.gamma;
        let rho = 1.0 - sum;
        if k == 0 {
            0.0
        } else if rho > 0.0 {
            -((k as f64) * (-sum).ln_1p()).exp_m1()
        } else if rho == 0.0 {
            1.0
        } else {
            let magnitude = (k as f64 * rho.abs().ln()).exp();
            if k.is_multiple_of(2) {
                1.0 - magnitude
            } else {
                1.0 + magnitude
            }
        }
    }
}

/// Row-major 2×2 matrix indexed by `[from][to]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2([[1.0, 0.0], [0.0, 1.0]]);
    pub const ZERO: Matrix2 = Matrix2([[0.0, 0.0], [0.0, 0.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Matrix2([[a, b], [c, d]])
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[row][col]
    }

    pub fn row(&self, row: usize) -> [f64; 2] {
        self.0[row]
    }

    pub fn row_sums(&self) -> [f64; 2] {
        [self.0[0][0] + self.0[0][1], self.0[1][0] + self.0[1][1]]
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.0.iter().flatten().all(|&v| v >= -tol) && self.row_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }

    pub fn determinant(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn max_abs_diff(&self, other: &Matrix2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: [f64; 2]) -> [f64; 2] {
        [
            v[0] * self.0[0][0] + v[1] * self.0[1][0],
            v[0] * self.0[0][1] + v[1] * self.0[1][1],
        ]
    }

    /// Entrywise `max(v, 0)`.
    pub fn clamp_nonnegative(self) -> Self {
        let m = self.0;
        Matrix2([
            [m[0][0].max(0.0), m[0][1].max(0.0)],
            [m[1][0].max(0.0), m[1][1].max(0.0)],
        ])
    }

    pub fn pow(&self, k: u64) -> Matrix2 {
        matrix_power(self, k)
    }
}

impl Mul for Matrix2 {
    type Output = Matrix2;

    fn mul(self, rhs: Matrix2) -> Matrix2 {
        let (a, b) = (self.0, rhs.0);
        Matrix2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl Sub for Matrix2 {
    type Output = Matrix2;

    fn sub(self, rhs: Matrix2) -> Matrix2 {
        let (a, b) = (self.0, rhs.0);
        Matrix2([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }
}

/// Distribution over `{G, B}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDist {
    pub pi_good: f64,
    pub pi_bad: f64,
}

impl StateDist {
    pub fn as_row(&self) -> [f64; 2] {
        [self.pi_good, self.pi_bad]
    }

    pub fn prob(&self, state: BitState) -> f64 {
        match state {
            BitState::Good => self.pi_good,
            BitState::Bad => self.pi_bad,
        }
    }
}

pub fn transition_matrix(params: &GilbertParams) -> Matrix2 {
    let (l, g) = (params.lambda, params.gamma);
    Matrix2::new(1.0 - l, l, g, 1.0 - g)
}

/// One-bit transition probabilities restricted to the bit arriving intact.
pub fn success_matrix(params: &GilbertParams) -> Matrix2 {
    let (l, g) = (params.lambda, params.gamma);
    let (sg, sb) = (1.0 - params.p_good, 1.0 - params.p_bad);
    Matrix2::new(sg * (1.0 - l), sg * l, sb * g, sb * (1.0 - g))
}

pub fn stationary(params: &GilbertParams) -> Result<StateDist> {
    let sum = params.lambda + params.gamma;
    if sum <= 0.0 {
        return Err(Error::DegenerateChain);
    }
    Ok(StateDist {
        pi_good: params.gamma / sum,
        pi_bad: params.lambda / sum,
    })
}

pub fn mean_ber(params: &GilbertParams) -> Result<f64> {
    let pi = stationary(params)?;
    let p_e = pi.pi_good * params.p_good + pi.pi_bad * params.p_bad;
    if p_e >= 1.0 - f64::EPSILON {
        return Err(Error::InvalidRate("mean bit-error rate equals 1".into()));
    }
    Ok(p_e)
}

/// `m^k` by repeated squaring.
pub fn matrix_power(m: &Matrix2, k: u64) -> Matrix2 {
    let mut result = Matrix2::IDENTITY;
    let mut base = *m;
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            result = result * base;
        }
        k >>= 1;
        if k > 0 {
            base = base * base;
        }
    }
    result
}

/// Power of a row-stochastic matrix with rows renormalized after every
/// product, so the unit eigenvalue does not drift under repeated squaring.
pub fn stochastic_power(m: &Matrix2, k: u64) -> Matrix2 {
    let normalize = |m: Matrix2| {
        let sums = m.row_sums();
        Matrix2([
            [m.0[0][0] / sums[0], m.0[0][1] / sums[0]],
            [m.0[1][0] / sums[1], m.0[1][1] / sums[1]],
        ])
    };
    let mut result = Matrix2::IDENTITY;
    let mut base = *m;
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            result = normalize(result * base);
        }
        k >>= 1;
        if k > 0 {
            base = normalize(base * base);
        }
    }
    result
}

/// `(Q^x, P^x - Q^x)` for `x` bits.
///
/// The failure part is accumulated by doubling with
/// `F(m + n) = F(m) P^n + Q^m F(n)`, starting from `F(1) = P - Q`. Every term
/// is nonnegative, so small failure probabilities keep full relative
/// precision instead of coming out of a difference of nearly equal powers.
pub fn success_failure_power(params: &GilbertParams, x: u64) -> (Matrix2, Matrix2) {
    let p = params.transition_matrix();
    let q = params.success_matrix();
    let f = Matrix2([
        [params.p_good * p.0[0][0], params.p_good * p.0[0][1]],
        [params.p_bad * p.0[1][0], params.p_bad * p.0[1][1]],
    ]);
    let combine = |a: (Matrix2, Matrix2, Matrix2), b: (Matrix2, Matrix2, Matrix2)| {
        let (pa, qa, fa) = a;
        let (pb, qb, fb) = b;
        let fab = fa * pb;
        let qfb = qa * fb;
        let mut sum = fab;
        for r in 0..2 {
            for c in 0..2 {
                sum.0[r][c] += qfb.0[r][c];
            }
        }
        (pa * pb, qa * qb, sum)
    };
    let mut result = (Matrix2::IDENTITY, Matrix2::IDENTITY, Matrix2::ZERO);
    let mut base = (p, q, f);
    let mut k = x;
    while k > 0 {
        if k & 1 == 1 {
            result = combine(result, base);
        }
        k >>= 1;
        if k > 0 {
            base = combine(base, base);
        }
    }
    (result.1, result.2)
}
