//! Message segmentation and the stationary packet-size mixture.
//!
//! All sizes are in bits. A message of `m` bits cut at payload `d` yields
//! `ceil(m / d)` packets: every packet but the last is a body packet of
//! `d + header` bits, the last (edge) packet carries the remainder.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// Finite message-size law: strictly increasing sizes with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMessageDist {
    atoms: Vec<(u64, f64)>,
}

impl DiscreteMessageDist {
    /// Builds the distribution, merging duplicate sizes. Weights must already
    /// sum to one.
    pub fn new(atoms: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let dist = Self::collect(atoms)?;
        let total: f64 = dist.atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(dist)
    }

    /// Like [`DiscreteMessageDist::new`] but rescales the weights to sum to one.
    pub fn normalized(atoms: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut dist = Self::collect(atoms)?;
        let total: f64 = dist.atoms.iter().map(|a| a.1).sum();
        for atom in &mut dist.atoms {
            atom.1 /= total;
        }
        Ok(dist)
    }

    pub fn constant(size: u64) -> Result<Self> {
        Self::new([(size, 1.0)])
    }

    fn collect(atoms: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<u64, f64> = BTreeMap::new();
        for (size, weight) in atoms {
            if size == 0 {
                return Err(Error::InvalidDistribution(
                    "message sizes must be positive".into(),
                ));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "weight {weight} for size {size} is not strictly positive"
                )));
            }
            *merged.entry(size).or_insert(0.0) += weight;
        }
        if merged.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        Ok(Self {
            atoms: merged.into_iter().collect(),
        })
    }

    /// Reads `size_bytes weight` pairs, one per line. Commas or whitespace
    /// separate the columns, `#` starts a comment. Weights are treated as
    /// relative and rescaled.
    pub fn parse_bytes_table(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let bad = || {
                Error::InvalidDistribution(format!(
                    "line {}: expected `size_bytes weight`, got `{raw}`",
                    lineno + 1
                ))
            };
            if fields.len() != 2 {
                return Err(bad());
            }
            let size: u64 = fields[0].parse().map_err(|_| bad())?;
            let weight: f64 = fields[1].parse().map_err(|_| bad())?;
            atoms.push((size.checked_mul(8).ok_or_else(bad)?, weight));
        }
        Self::normalized(atoms)
    }

    pub fn load_bytes_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidDistribution(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_bytes_table(&text)
    }

    pub fn atoms(&self) -> &[(u64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(s, w)| s as f64 * w).sum()
    }

    pub fn max_size(&self) -> u64 {
        self.atoms.last().map(|a| a.0).unwrap_or(0)
    }
}

/// Payload and header sizes in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentationConfig {
    payload: u64,
    header: u64,
}

impl SegmentationConfig {
    pub fn new(payload: u64, header: u64) -> Result<Self> {
        if payload == 0 {
            return Err(Error::InvalidSize("payload must be at least one bit".into()));
        }
        Ok(Self { payload, header })
    }

    pub fn payload(&self) -> u64 {
        self.payload
    }

    pub fn header(&self) -> u64 {
        self.header
    }

    pub fn body_size(&self) -> u64 {
        self.payload + self.header
    }
}

/// Stationary packet-size law: one body atom plus edge atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketMix {
    pub body_size: u64,
    pub body_weight: f64,
    /// Edge atoms at sizes other than `body_size`, increasing by size.
    pub edge_atoms: Vec<(u64, f64)>,
    /// Probability that a packet is the last one of its message. Kept even
    /// when edge atoms coincide with the body atom and get merged into it.
    pub edge_prob: f64,
    pub header: u64,
}

impl PacketMix {
    /// All atoms with positive weight, ordered by size.
    pub fn atoms(&self) -> Vec<(u64, f64)> {
        let mut atoms: Vec<(u64, f64)> = self.edge_atoms.clone();
        if self.body_weight > 0.0 {
            atoms.push((self.body_size, self.body_weight));
        }
        atoms.sort_by_key(|a| a.0);
        atoms
    }

    pub fn mean_size(&self) -> f64 {
        self.atoms().iter().map(|&(s, w)| s as f64 * w).sum()
    }

    pub fn max_size(&self) -> u64 {
        self.atoms().last().map(|a| a.0).unwrap_or(self.body_size)
    }

    /// True when every packet has the same size.
    pub fn is_constant_size(&self) -> bool {
        self.atoms().len() == 1
    }
}

/// Information-field sizes of the packets cut from one message.
pub fn segment_message(msg_size: u64, payload: u64) -> Vec<u64> {
    assert!(msg_size >= 1 && payload >= 1, "sizes must be positive");
    let count = msg_size.div_ceil(payload);
    let mut fields = vec![payload; count as usize];
    fields[count as usize - 1] = msg_size - (count - 1) * payload;
    fields
}

/// Probability that a packet is the edge packet of its message.
pub fn edge_probability(dist: &DiscreteMessageDist, payload: u64) -> f64 {
    let mean_packets: f64 = dist
        .atoms
        .iter()
        .map(|&(size, w)| w * size.div_ceil(payload) as f64)
        .sum();
    1.0 / mean_packets
}

pub fn packet_mix(dist: &DiscreteMessageDist, cfg: &SegmentationConfig) -> PacketMix {
    let edge_prob = edge_probability(dist, cfg.payload);
    let body_size = cfg.body_size();
    let mut body_weight = 1.0 - edge_prob;
    let mut edges: BTreeMap<u64, f64> = BTreeMap::new();
    for &(size, w) in &dist.atoms {
        let packets = size.div_ceil(cfg.payload);
        let edge_size = size - (packets - 1) * cfg.payload + cfg.header;
        let weight = edge_prob * w;
        if edge_size == body_size {
            body_weight += weight;
        } else {
            *edges.entry(edge_size).or_insert(0.0) += weight;
        }
    }
    PacketMix {
        body_size,
        body_weight,
        edge_atoms: edges.into_iter().collect(),
        edge_prob,
        header: cfg.header,
    }
}

/// Mean packet size in bits: `edge_prob * mean_message + header`.
pub fn mean_packet_size(dist: &DiscreteMessageDist, cfg: &SegmentationConfig) -> f64 {
    edge_probability(dist, cfg.payload) * dist.mean() + cfg.header as f64
}

/// Quantile discretization of a sampled CDF into at most `n_atoms` atoms.
///
/// Level `j / n_atoms` (j = 1..=n_atoms) maps to the smallest sampled size
/// whose cumulative probability reaches it; coincident sizes merge.
pub fn discretize(cdf_samples: &[(u64, f64)], n_atoms: usize) -> Result<DiscreteMessageDist> {
    const CDF_TOL: f64 = 1e-12;
    if cdf_samples.is_empty() {
        return Err(Error::MalformedCdf("no samples".into()));
    }
    if n_atoms == 0 {
        return Err(Error::MalformedCdf("n_atoms must be positive".into()));
    }
    let mut prev: Option<(u64, f64)> = None;
    for &(size, cum) in cdf_samples {
        if !cum.is_finite() || !(0.0..=1.0 + CDF_TOL).contains(&cum) {
            return Err(Error::MalformedCdf(format!(
                "cumulative value {cum} out of [0, 1]"
            )));
        }
        if let Some((ps, pc)) = prev {
            if size <= ps {
                return Err(Error::MalformedCdf("sizes must be strictly increasing".into()));
            }
            if cum < pc {
                return Err(Error::MalformedCdf(format!(
                    "cumulative value drops from {pc} to {cum} at size {size}"
                )));
            }
        }
        prev = Some((size, cum));
    }
    let last = cdf_samples[cdf_samples.len() - 1].1;
    if (last - 1.0).abs() > CDF_TOL {
        return Err(Error::MalformedCdf(format!("CDF ends at {last}, expected 1")));
    }

    let weight = 1.0 / n_atoms as f64;
    let mut atoms = Vec::with_capacity(n_atoms);
    let mut idx = 0;
    for j in 1..=n_atoms {
        let level = j as f64 / n_atoms as f64;
        while cdf_samples[idx].1 < level - CDF_TOL {
            idx += 1;
        }
        atoms.push((cdf_samples[idx].0, weight));
    }
    DiscreteMessageDist::normalized(atoms)
}
