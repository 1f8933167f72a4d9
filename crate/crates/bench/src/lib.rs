//! Shared fixtures for the benchmarks.

use calamp_core::channels::ChannelKind;
use calamp_core::synth::{generate, InstanceParams};
use calamp_core::{GainPrior, ProblemInstance, Scalar, SignalPrior};

pub fn gain_channel(delta: f64) -> ChannelKind {
    ChannelKind::RealGain { delta, gain_prior: GainPrior::uniform(1.0) }
}

pub fn complex_gain_channel(delta: f64) -> ChannelKind {
    ChannelKind::ComplexGain { delta, gain_prior: GainPrior::ComplexNormal { complex_gain_variance: 10.0 } }
}

/// A fixed-seed instance; panics on invalid parameters.
pub fn instance<S: Scalar>(n: usize, alpha: f64, p: usize, prior: SignalPrior, channel: ChannelKind) -> ProblemInstance<S> {
    let params = InstanceParams::new(n, alpha, p, prior, channel, 1).expect("valid benchmark parameters");
    generate(&params).expect("instance generation")
}
