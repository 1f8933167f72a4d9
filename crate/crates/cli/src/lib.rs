//! Driver layer for calibration AMP: configuration, single solves,
//! phase-diagram sweeps, bound curves and the oracle self-check.

pub mod alpha_cs;
pub mod config;
pub mod error;
pub mod run;
pub mod selfcheck;
pub mod solve;
pub mod sweep;
pub mod threads;

pub use error::{CliError, Result};
