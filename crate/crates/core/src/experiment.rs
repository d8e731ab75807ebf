//! Experiment configuration, payload sweeps, CSV output and validation.
//!
//! Configs are flat `key = value` text grouped in `[section]`s, `#` starts a
//! comment. Every field has a default, so an empty file describes the
//! reference scenario: 1 Mbps link, 38-byte header and ACK, 100 ms timeout,
//! 1 ms propagation delay and constant 4000-byte messages over an error-free
//! channel.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{
    RetryModel, TimingConfig, attempts_pmf_iid, goodput, goodput_const_approx, optimal_payload, payload_grid,
};
use crate::channel::GilbertParams;
use crate::error::Error;
use crate::segmentation::{DiscreteMessageDist, PacketMix, SegmentationConfig, packet_mix};
use crate::sim::{self, SimConfig, SimReport, StateMode};
use crate::stats::chi_square_attempts;

/// Marker line that opens the config echo in CSV output.
pub const ECHO_MARKER: &str = "# resolved config";

pub const CSV_COLUMNS: [&str; 10] = [
    "payload_bytes",
    "payload_bits",
    "edge_prob",
    "mean_packet_bytes",
    "mean_packet_bits",
    "goodput_exact_bps",
    "goodput_const_approx_bps",
    "goodput_sim_bps",
    "sim_stderr_bps",
    "sim_packets",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageSpec {
    ConstantBytes(u64),
    AtomsBytes(Vec<(u64, f64)>),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    Explicit {
        lambda: f64,
        gamma: f64,
        p_good: f64,
        p_bad: f64,
    },
    /// `burst_len = None` means memoryless errors.
    MeanBer { mean_ber: f64, burst_len: Option<f64> },
}

impl ChannelSpec {
    pub fn resolve(&self) -> Result<GilbertParams, Error> {
        match *self {
            ChannelSpec::Explicit {
                lambda,
                gamma,
                p_good,
                p_bad,
            } => GilbertParams::new(lambda, gamma, p_good, p_bad),
            ChannelSpec::MeanBer {
                mean_ber,
                burst_len: None,
            } => GilbertParams::iid(mean_ber),
            ChannelSpec::MeanBer {
                mean_ber: 0.0,
                burst_len: Some(burst),
            } => {
                if !(burst.is_finite() && burst >= 1.0) {
                    return Err(Error::InvalidRate(format!("burst length {burst} below 1 bit")));
                }
                GilbertParams::new(0.0, 1.0 / burst, 0.0, 1.0)
            }
            ChannelSpec::MeanBer {
                mean_ber,
                burst_len: Some(burst),
            } => GilbertParams::from_mean_ber_and_burst(mean_ber, burst),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Analytic,
    Simulate,
    Both,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "analytic" => Some(Mode::Analytic),
            "simulate" => Some(Mode::Simulate),
            "both" => Some(Mode::Both),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Analytic => "analytic",
            Mode::Simulate => "simulate",
            Mode::Both => "both",
        }
    }

    pub fn analytic(self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    pub fn simulate(self) -> bool {
        matches!(self, Mode::Simulate | Mode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSpec {
    pub min_bytes: u64,
    pub max_bytes: u64,
    pub step_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimSettings {
    pub packets_per_rep: u64,
    pub replications: u64,
    pub seed: u64,
    pub state_mode: StateMode,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            packets_per_rep: 100_000,
            replications: 10,
            seed: 1,
            state_mode: StateMode::StationaryPerPacket,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub message: MessageSpec,
    pub header_bytes: u64,
    pub ack_bytes: u64,
    pub capacity_bps: f64,
    pub timeout_s: f64,
    pub propagation_s: f64,
    pub channel: ChannelSpec,
    pub sweep: SweepSpec,
    pub mode: Mode,
    pub sim: Option<SimSettings>,
    /// Evaluate grid points and replications on the rayon pool.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            message: MessageSpec::ConstantBytes(4000),
            header_bytes: 38,
            ack_bytes: 38,
            capacity_bps: 1e6,
            timeout_s: 0.1,
            propagation_s: 1e-3,
            channel: ChannelSpec::MeanBer {
                mean_ber: 0.0,
                burst_len: None,
            },
            sweep: SweepSpec {
                min_bytes: 100,
                max_bytes: 4000,
                step_bytes: 10,
            },
            mode: Mode::Analytic,
            sim: None,
            parallel: true,
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::at(line, format!("cannot parse `{value}` for `{key}`")))
}

fn parse_atoms(line: usize, value: &str) -> Result<Vec<(u64, f64)>, ConfigError> {
    value
        .split(',')
        .map(|item| {
            let (size, weight) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| ConfigError::at(line, format!("atom `{item}` is not `size_bytes:weight`")))?;
            Ok((
                parse_value(line, "atoms", size.trim())?,
                parse_value(line, "atoms", weight.trim())?,
            ))
        })
        .collect()
}

impl ExperimentConfig {
    /// Parses config text. Relative `message.file` paths resolve against
    /// `base_dir` when given.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut section: Option<String> = None;
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut message_forms = Vec::new();
        let mut explicit: BTreeMap<&'static str, f64> = BTreeMap::new();
        let mut mean_ber: Option<f64> = None;
        let mut burst_len: Option<f64> = None;
        let mut channel_line = 0;
        let mut sim = SimSettings::default();
        let mut sim_present = false;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(lineno, "unterminated section header"))?
                    .trim();
                if !["message", "link", "channel", "sweep", "sim"].contains(&name) {
                    return Err(ConfigError::at(lineno, format!("unknown section [{name}]")));
                }
                if name == "sim" {
                    sim_present = true;
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(lineno, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sect = section
                .as_deref()
                .ok_or_else(|| ConfigError::at(lineno, format!("`{key}` appears before any [section]")))?;
            let full = format!("{sect}.{key}");
            if let Some(first) = seen.insert(full.clone(), lineno) {
                return Err(ConfigError::at(
                    lineno,
                    format!("`{full}` already set on line {first}"),
                ));
            }
            match full.as_str() {
                "message.size_bytes" => {
                    message_forms.push(lineno);
                    cfg.message = MessageSpec::ConstantBytes(parse_value(lineno, key, value)?);
                }
                "message.atoms" => {
                    message_forms.push(lineno);
                    cfg.message = MessageSpec::AtomsBytes(parse_atoms(lineno, value)?);
                }
                "message.file" => {
                    message_forms.push(lineno);
                    let path = PathBuf::from(value);
                    let path = match base_dir {
                        Some(dir) if path.is_relative() => dir.join(path),
                        _ => path,
                    };
                    cfg.message = MessageSpec::File(path);
                }
                "link.capacity_bps" => cfg.capacity_bps = parse_value(lineno, key, value)?,
                "link.header_bytes" => cfg.header_bytes = parse_value(lineno, key, value)?,
                "link.ack_bytes" => cfg.ack_bytes = parse_value(lineno, key, value)?,
                "link.timeout_s" => cfg.timeout_s = parse_value(lineno, key, value)?,
                "link.propagation_s" => cfg.propagation_s = parse_value(lineno, key, value)?,
                "channel.lambda" | "channel.gamma" | "channel.p_good" | "channel.p_bad" => {
                    channel_line = lineno;
                    let name = match key {
                        "lambda" => "lambda",
                        "gamma" => "gamma",
                        "p_good" => "p_good",
                        _ => "p_bad",
                    };
                    explicit.insert(name, parse_value(lineno, key, value)?);
                }
                "channel.mean_ber" => {
                    channel_line = lineno;
                    mean_ber = Some(parse_value(lineno, key, value)?);
                }
                "channel.burst_len" => {
                    channel_line = lineno;
                    burst_len = Some(parse_value(lineno, key, value)?);
                }
                "sweep.min_bytes" => cfg.sweep.min_bytes = parse_value(lineno, key, value)?,
                "sweep.max_bytes" => cfg.sweep.max_bytes = parse_value(lineno, key, value)?,
                "sweep.step_bytes" => cfg.sweep.step_bytes = parse_value(lineno, key, value)?,
                "sweep.mode" => {
                    cfg.mode = Mode::parse(value).ok_or_else(|| {
                        ConfigError::at(
                            lineno,
                            format!("mode must be analytic, simulate or both, got `{value}`"),
                        )
                    })?
                }
                "sim.packets_per_rep" => sim.packets_per_rep = parse_value(lineno, key, value)?,
                "sim.replications" => sim.replications = parse_value(lineno, key, value)?,
                "sim.seed" => sim.seed = parse_value(lineno, key, value)?,
                "sim.state_mode" => {
                    sim.state_mode = match value {
                        "stationary" => StateMode::StationaryPerPacket,
                        "continuous" => StateMode::Continuous,
                        _ => {
                            return Err(ConfigError::at(
                                lineno,
                                format!("state_mode must be stationary or continuous, got `{value}`"),
                            ));
                        }
                    }
                }
                _ => return Err(ConfigError::at(lineno, format!("unknown key `{full}`"))),
            }
        }

        if message_forms.len() > 1 {
            return Err(ConfigError::at(
                message_forms[1],
                "give exactly one of message.size_bytes, message.atoms, message.file",
            ));
        }
        let has_explicit = !explicit.is_empty();
        let has_mean = mean_ber.is_some() || burst_len.is_some();
        if has_explicit && has_mean {
            return Err(ConfigError::at(
                channel_line,
                "channel given both as {lambda, gamma, p_good, p_bad} and as {mean_ber, burst_len}",
            ));
        }
        if has_explicit {
            let lambda = explicit.get("lambda").copied();
            let gamma = explicit.get("gamma").copied();
            let (Some(lambda), Some(gamma)) = (lambda, gamma) else {
                return Err(ConfigError::at(
                    channel_line,
                    "explicit channel needs both lambda and gamma",
                ));
            };
            cfg.channel = ChannelSpec::Explicit {
                lambda,
                gamma,
                p_good: explicit.get("p_good").copied().unwrap_or(0.0),
                p_bad: explicit.get("p_bad").copied().unwrap_or(1.0),
            };
        } else if has_mean {
            let Some(mean_ber) = mean_ber else {
                return Err(ConfigError::at(channel_line, "burst_len given without mean_ber"));
            };
            cfg.channel = ChannelSpec::MeanBer { mean_ber, burst_len };
        }
        if sim_present {
            cfg.sim = Some(sim);
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        if text.lines().any(|l| l.trim_end() == ECHO_MARKER) {
            return Self::from_csv_echo(&text, path.parent());
        }
        Self::parse(&text, path.parent())
    }

    /// Recovers the config echoed at the top of a sweep CSV.
    pub fn from_csv_echo(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let body: String = text
            .lines()
            .skip_while(|l| l.trim_end() != ECHO_MARKER)
            .skip(1)
            .take_while(|l| l.starts_with('#'))
            .map(|l| format!("{}\n", l.strip_prefix("# ").unwrap_or("")))
            .collect();
        Self::parse(&body, base_dir)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let s = &self.sweep;
        if s.min_bytes == 0 {
            return Err(ConfigError::new("sweep.min_bytes must be at least 1"));
        }
        if s.min_bytes > s.max_bytes {
            return Err(ConfigError::new("sweep.min_bytes exceeds sweep.max_bytes"));
        }
        if s.step_bytes == 0 {
            return Err(ConfigError::new("sweep.step_bytes must be at least 1"));
        }
        if let Some(sim) = &self.sim {
            SimConfig::new(sim.packets_per_rep, sim.replications, sim.seed, sim.state_mode)
                .map_err(|e| ConfigError::new(e.to_string()))?;
        }
        Ok(())
    }

    /// Sim settings, falling back to defaults.
    pub fn sim_settings(&self) -> SimSettings {
        self.sim.unwrap_or_default()
    }

    /// Canonical config text with every field spelled out.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[message]");
        match &self.message {
            MessageSpec::ConstantBytes(b) => {
                let _ = writeln!(out, "size_bytes = {b}");
            }
            MessageSpec::AtomsBytes(atoms) => {
                let list: Vec<String> = atoms.iter().map(|(s, w)| format!("{s}:{w}")).collect();
                let _ = writeln!(out, "atoms = {}", list.join(", "));
            }
            MessageSpec::File(path) => {
                let _ = writeln!(out, "file = {}", path.display());
            }
        }
        let _ = writeln!(out, "[link]");
        let _ = writeln!(out, "capacity_bps = {}", self.capacity_bps);
        let _ = writeln!(out, "header_bytes = {}", self.header_bytes);
        let _ = writeln!(out, "ack_bytes = {}", self.ack_bytes);
        let _ = writeln!(out, "timeout_s = {}", self.timeout_s);
        let _ = writeln!(out, "propagation_s = {}", self.propagation_s);
        let _ = writeln!(out, "[channel]");
        match self.channel {
            ChannelSpec::Explicit {
                lambda,
                gamma,
                p_good,
                p_bad,
            } => {
                let _ = writeln!(out, "lambda = {lambda}");
                let _ = writeln!(out, "gamma = {gamma}");
                let _ = writeln!(out, "p_good = {p_good}");
                let _ = writeln!(out, "p_bad = {p_bad}");
            }
            ChannelSpec::MeanBer { mean_ber, burst_len } => {
                let _ = writeln!(out, "mean_ber = {mean_ber}");
                if let Some(b) = burst_len {
                    let _ = writeln!(out, "burst_len = {b}");
                }
            }
        }
        let _ = writeln!(out, "[sweep]");
        let _ = writeln!(out, "min_bytes = {}", self.sweep.min_bytes);
        let _ = writeln!(out, "max_bytes = {}", self.sweep.max_bytes);
        let _ = writeln!(out, "step_bytes = {}", self.sweep.step_bytes);
        let _ = writeln!(out, "mode = {}", self.mode.as_str());
        if self.sim.is_some() || self.mode.simulate() {
            let sim = self.sim_settings();
            let _ = writeln!(out, "[sim]");
            let _ = writeln!(out, "packets_per_rep = {}", sim.packets_per_rep);
            let _ = writeln!(out, "replications = {}", sim.replications);
            let _ = writeln!(out, "seed = {}", sim.seed);
            let mode = match sim.state_mode {
                StateMode::StationaryPerPacket => "stationary",
                StateMode::Continuous => "continuous",
            };
            let _ = writeln!(out, "state_mode = {mode}");
        }
        out
    }

    pub fn resolve(&self) -> Result<Experiment, ExperimentError> {
        let dist = match &self.message {
            MessageSpec::ConstantBytes(b) => DiscreteMessageDist::constant(b * 8)?,
            MessageSpec::AtomsBytes(atoms) => {
                DiscreteMessageDist::normalized(atoms.iter().map(|&(s, w)| (s * 8, w)))?
            }
            MessageSpec::File(path) => DiscreteMessageDist::load_bytes_table(path)?,
        };
        let header = self.header_bytes * 8;
        let timing = TimingConfig::new(
            self.capacity_bps,
            self.timeout_s,
            self.propagation_s,
            self.ack_bytes * 8,
            header,
        )?;
        let params = self.channel.resolve()?;
        let s = self.sweep;
        let payloads = payload_grid(&(s.min_bytes * 8..=s.max_bytes * 8), s.step_bytes * 8)?;
        let sim = if self.mode.simulate() || self.sim.is_some() {
            let st = self.sim_settings();
            let mut sc = SimConfig::new(st.packets_per_rep, st.replications, st.seed, st.state_mode)?;
            sc.parallel = self.parallel;
            Some(sc)
        } else {
            None
        };
        Ok(Experiment {
            dist,
            timing,
            params,
            payloads,
            mode: self.mode,
            sim,
            parallel: self.parallel,
        })
    }
}

/// A config resolved into model objects. Sizes in bits.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub dist: DiscreteMessageDist,
    pub timing: TimingConfig,
    pub params: GilbertParams,
    pub payloads: Vec<u64>,
    pub mode: Mode,
    pub sim: Option<SimConfig>,
    pub parallel: bool,
}

impl Experiment {
    pub fn header(&self) -> u64 {
        self.timing.header_bits()
    }

    pub fn mix(&self, payload: u64) -> Result<PacketMix, Error> {
        Ok(packet_mix(
            &self.dist,
            &SegmentationConfig::new(payload, self.header())?,
        ))
    }

    fn check_fits(&self) -> Result<(), Error> {
        let t_out = self.timing.timeout_bits();
        for &d in &self.payloads {
            let largest = d.min(self.dist.max_size()) + self.header();
            if largest > t_out {
                return Err(Error::TimeoutTooShort {
                    size: largest,
                    timeout: t_out,
                });
            }
        }
        Ok(())
    }

    pub fn simulate_at(&self, payload: u64) -> Result<SimReport, Error> {
        let sim = self
            .sim
            .ok_or_else(|| Error::InvalidSimConfig("no simulation settings".into()))?;
        sim::run(
            &sim,
            &self.dist,
            &SegmentationConfig::new(payload, self.header())?,
            &self.timing,
            &self.params,
        )
    }

    fn row(&self, payload: u64) -> Result<SweepRow, Error> {
        let mix = self.mix(payload)?;
        let (exact, approx) = if self.mode.analytic() {
            (
                Some(goodput(&mix, &self.timing, &self.params)?.goodput),
                Some(goodput_const_approx(
                    payload,
                    self.header(),
                    &self.timing,
                    &self.params,
                )?),
            )
        } else {
            (None, None)
        };
        let sim = if self.mode.simulate() {
            Some(self.simulate_at(payload)?)
        } else {
            None
        };
        let mean_bits = mix.mean_size();
        Ok(SweepRow {
            payload_bytes: payload / 8,
            payload_bits: payload,
            edge_prob: mix.edge_prob,
            mean_packet_bytes: mean_bits / 8.0,
            mean_packet_bits: mean_bits,
            goodput_exact_bps: exact,
            goodput_const_approx_bps: approx,
            goodput_sim_bps: sim.as_ref().map(|r| r.goodput_est),
            sim_stderr_bps: sim.as_ref().map(|r| r.goodput_stderr),
            sim_packets: sim.as_ref().map(|r| r.packets_observed),
        }
        .quantized())
    }
}

/// Rounds to 12 significant digits, the precision written to CSV.
pub fn round_sig12(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

fn fmt_sig12(v: f64) -> String {
    format!("{v:.11e}")
}

/// One payload grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub payload_bytes: u64,
    pub payload_bits: u64,
    pub edge_prob: f64,
    pub mean_packet_bytes: f64,
    pub mean_packet_bits: f64,
    pub goodput_exact_bps: Option<f64>,
    pub goodput_const_approx_bps: Option<f64>,
    pub goodput_sim_bps: Option<f64>,
    pub sim_stderr_bps: Option<f64>,
    pub sim_packets: Option<u64>,
}

impl SweepRow {
    fn quantized(mut self) -> Self {
        self.edge_prob = round_sig12(self.edge_prob);
        self.mean_packet_bytes = round_sig12(self.mean_packet_bytes);
        self.mean_packet_bits = round_sig12(self.mean_packet_bits);
        for v in [
            &mut self.goodput_exact_bps,
            &mut self.goodput_const_approx_bps,
            &mut self.goodput_sim_bps,
            &mut self.sim_stderr_bps,
        ] {
            *v = v.map(round_sig12);
        }
        self
    }

    fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_sig12).unwrap_or_default();
        [
            self.payload_bytes.to_string(),
            self.payload_bits.to_string(),
            fmt_sig12(self.edge_prob),
            fmt_sig12(self.mean_packet_bytes),
            fmt_sig12(self.mean_packet_bits),
            opt(self.goodput_exact_bps),
            opt(self.goodput_const_approx_bps),
            opt(self.goodput_sim_bps),
            opt(self.sim_stderr_bps),
            self.sim_packets.map(|p| p.to_string()).unwrap_or_default(),
        ]
        .join(",")
    }

    fn from_csv(line: &str) -> Result<Self, ExperimentError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CSV_COLUMNS.len() {
            return Err(ExperimentError::Csv(format!(
                "expected {} fields, got {}",
                CSV_COLUMNS.len(),
                fields.len()
            )));
        }
        let bad = |f: &str| ExperimentError::Csv(format!("cannot parse `{f}`"));
        let int = |f: &str| f.parse::<u64>().map_err(|_| bad(f));
        let float = |f: &str| f.parse::<f64>().map_err(|_| bad(f));
        let opt = |f: &str| {
            if f.is_empty() {
                Ok(None)
            } else {
                float(f).map(Some)
            }
        };
        Ok(SweepRow {
            payload_bytes: int(fields[0])?,
            payload_bits: int(fields[1])?,
            edge_prob: float(fields[2])?,
            mean_packet_bytes: float(fields[3])?,
            mean_packet_bits: float(fields[4])?,
            goodput_exact_bps: opt(fields[5])?,
            goodput_const_approx_bps: opt(fields[6])?,
            goodput_sim_bps: opt(fields[7])?,
            sim_stderr_bps: opt(fields[8])?,
            sim_packets: if fields[9].is_empty() {
                None
            } else {
                Some(int(fields[9])?)
            },
        })
    }
}

/// Evaluates every payload grid point, ordered by payload.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    let exp = cfg.resolve()?;
    exp.check_fits()?;
    let rows = if exp.parallel {
        exp.payloads
            .par_iter()
            .map(|&d| exp.row(d))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        exp.payloads
            .iter()
            .map(|&d| exp.row(d))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(rows)
}

/// Writes rows as CSV with the resolved config echoed in a comment block.
pub fn write_csv(cfg: &ExperimentConfig, rows: &[SweepRow], trailer: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# stop-and-wait goodput sweep (sizes in bytes and bits, rates in bit/s)"
    );
    if let Ok(exp) = cfg.resolve() {
        let p = exp.params;
        let _ = writeln!(
            out,
            "# channel: lambda={} gamma={} p_good={} p_bad={} timeout_bits={}",
            p.lambda(),
            p.gamma(),
            p.p_good(),
            p.p_bad(),
            exp.timing.timeout_bits()
        );
    }
    let _ = writeln!(out, "{ECHO_MARKER}");
    for line in cfg.to_text().lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "{}", CSV_COLUMNS.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv());
    }
    for line in trailer {
        let _ = writeln!(out, "# {line}");
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| ExperimentError::Csv("missing header row".into()))?;
    if header != CSV_COLUMNS.join(",") {
        return Err(ExperimentError::Csv(format!("unexpected header `{header}`")));
    }
    lines.map(SweepRow::from_csv).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub payload_bytes: u64,
    pub goodput_bps: f64,
}

impl fmt::Display for Optimum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "optimum payload_bytes={} payload_bits={} goodput_bps={}",
            self.payload_bytes,
            self.payload_bytes * 8,
            fmt_sig12(self.goodput_bps)
        )
    }
}

pub fn optimize(cfg: &ExperimentConfig) -> Result<Optimum, ExperimentError> {
    let exp = cfg.resolve()?;
    let s = cfg.sweep;
    let (payload, goodput_bps) = optimal_payload(
        &exp.dist,
        exp.header(),
        &exp.timing,
        &exp.params,
        s.min_bytes * 8..=s.max_bytes * 8,
        s.step_bytes * 8,
    )?;
    Ok(Optimum {
        payload_bytes: payload / 8,
        goodput_bps: round_sig12(goodput_bps),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Mixture attempt PMF `Σ_x w_x Pr(N = n | x)` until the tail drops below
/// `tail` or `max_n` terms.
pub fn mixture_attempts_pmf(
    mix: &PacketMix,
    timing: &TimingConfig,
    params: &GilbertParams,
    tail: f64,
    max_n: usize,
) -> Result<Vec<f64>, Error> {
    let models = mix
        .atoms()
        .into_iter()
        .map(|(x, w)| Ok((RetryModel::new(x, timing.timeout_bits(), params)?, w)))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut iters: Vec<_> = models.iter().map(|(m, w)| (m.pmf_survival_iter(), *w)).collect();
    let mut out = Vec::new();
    while out.len() < max_n {
        let (mut p, mut survival) = (0.0, 0.0);
        for (it, w) in iters.iter_mut() {
            let (pn, sn) = it.next().unwrap_or((0.0, 0.0));
            p += *w * pn;
            survival += *w * sn;
        }
        out.push(p);
        if survival < tail {
            break;
        }
    }
    Ok(out)
}

/// Goodput agreement tolerance: three standard errors plus float slack for
/// the zero-variance case.
pub fn within_three_sigma(sim: f64, stderr: f64, exact: f64) -> bool {
    (sim - exact).abs() <= 3.0 * stderr + 1e-9 * exact.abs()
}

/// Compares the analytic model with the simulator at every grid payload.
/// `perturb` scales the analytic goodput (harness self-test hook).
pub fn validate(cfg: &ExperimentConfig, perturb: f64) -> Result<ValidationReport, ExperimentError> {
    if cfg.sim.is_none() {
        return Err(ConfigError::new("validate needs a [sim] section").into());
    }
    let exp = cfg.resolve()?;
    exp.check_fits()?;
    let mut checks = Vec::new();

    if exp.params.is_iid_equivalent() {
        let p_e = exp.params.mean_ber()?;
        let mut worst: f64 = 0.0;
        for &d in &exp.payloads {
            for (x, _) in exp.mix(d)?.atoms() {
                let model = RetryModel::new(x, exp.timing.timeout_bits(), &exp.params)?;
                for (i, p) in model.pmf_iter().take(50).enumerate() {
                    worst = worst.max((p - attempts_pmf_iid(i as u64 + 1, x, p_e)).abs());
                }
            }
        }
        checks.push(Check {
            name: "i.i.d. equivalence".into(),
            passed: worst <= 1e-10,
            detail: format!("max |Pr_chain - Pr_iid| over n <= 50 = {worst:.3e} (tol 1e-10)"),
        });
    }

    for &d in &exp.payloads {
        let mix = exp.mix(d)?;
        let exact = goodput(&mix, &exp.timing, &exp.params)?.goodput * (1.0 + perturb);
        let report = exp.simulate_at(d)?;
        let ok = within_three_sigma(report.goodput_est, report.goodput_stderr, exact);
        checks.push(Check {
            name: format!("goodput 3-sigma @ {} B", d / 8),
            passed: ok,
            detail: format!(
                "analytic {} sim {} stderr {} ({} packets)",
                fmt_sig12(exact),
                fmt_sig12(report.goodput_est),
                fmt_sig12(report.goodput_stderr),
                report.packets_observed
            ),
        });
        let pmf = mixture_attempts_pmf(&mix, &exp.timing, &exp.params, 1e-12, 1_000_000)?;
        let chi = chi_square_attempts(&report.attempts_counts, &pmf, 0.001, 5.0);
        checks.push(Check {
            name: format!("attempts chi-square @ {} B", d / 8),
            passed: chi.passed(),
            detail: format!(
                "statistic {:.3} on {} dof, critical {:.3} at level 0.001",
                chi.statistic, chi.dof, chi.critical
            ),
        });
    }
    Ok(ValidationReport { checks })
}
