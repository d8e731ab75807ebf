//! Exact long-run goodput of a stop-and-wait protocol over a Gilbert
//! burst-error channel when messages are segmented into packets, with a
//! Monte Carlo simulator that checks the closed forms.
//!
//! Sizes are integer bits throughout; times are seconds.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod segmentation;
pub mod sim;
pub mod stats;

pub use analysis::{
    AtomDetail, GoodputReport, RetryModel, TimingConfig, attempts_pmf, attempts_pmf_iid,
    expected_time_given_size, goodput, goodput_const_approx, goodput_for_payload, mean_attempts,
    optimal_payload, retry_kernel,
};
pub use channel::{BitState, GilbertParams, Matrix2, StateDist, matrix_power};
pub use error::{Error, Result};
pub use experiment::{ConfigError, ExperimentConfig, ExperimentError, Mode, SweepRow};
pub use segmentation::{
    DiscreteMessageDist, PacketMix, SegmentationConfig, discretize, edge_probability, mean_packet_size,
    packet_mix, segment_message,
};
pub use sim::{SimConfig, SimReport, StateMode, simulate_packet, skip_ahead_state};
