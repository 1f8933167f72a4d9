//! Calibration approximate message passing.

pub mod bounds;
pub mod channels;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod oracle;
pub mod priors;
pub mod scalar;
pub mod solver;
pub mod synth;

pub use channels::{ChannelKind, ChannelOutput, ChannelRow, OutputChannel};
pub use error::{Error, Result};
pub use priors::{GainEstimate, GainFlag, GainPrior, SignalPrior};
pub use scalar::{Field, Scalar};
pub use metrics::{cross_correlation, RecoveryScore};
pub use solver::{solve, SolveResult, SolverConfig, SolverState};
pub use synth::{generate, InstanceParams, ProblemInstance};
