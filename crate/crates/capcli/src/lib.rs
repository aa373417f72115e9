//! Command-line front end for the capacity toolkit: configuration loading,
//! the verification and throughput subcommands, and the scaling sweep.

// Validation guards are written `!(x > lo)` so NaN fails them; the suggested
// `x <= lo` rewrite would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod sweep;

pub use config::ExperimentConfig;
pub use sweep::{run_sweep, SweepOutcome, SweepRow};
