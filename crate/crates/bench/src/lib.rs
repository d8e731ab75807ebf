//! Benchmarks live in `benches/`; this crate only hosts them.

pub use goodput_core;
