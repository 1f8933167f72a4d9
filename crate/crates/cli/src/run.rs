//! Generate, solve and score one instance.

use std::time::Instant;

use calamp_core::solver::{Diagnostics, DivergenceReport};
use calamp_core::synth::{generate, InstanceParams};
use calamp_core::{cross_correlation, solve, Field, ProblemInstance, RecoveryScore, Scalar, SolveResult, SolverConfig};
use ndarray::Axis;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub score: RecoveryScore,
    pub iterations: usize,
    pub converged: bool,
    pub divergence: Option<DivergenceReport>,
    pub wall_ms: f64,
    /// Correlation between estimated and true gains, for gain channels.
    pub gain_mu: Option<f64>,
    pub history: Vec<Diagnostics>,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.score.success()
    }
}

/// Solves an already generated instance with the channel it was drawn from.
pub fn solve_instance<S: Scalar>(inst: &ProblemInstance<S>, config: &SolverConfig) -> Result<(SolveResult<S>, RunOutcome)> {
    let prior = inst.params.prior;
    let d_cal = inst.d_true.to_vec();
    let channel = inst.params.channel.build(&d_cal, prior.variance())?;
    let start = Instant::now();
    let r = solve(inst.f.view(), inst.y.view(), &prior, &*channel, config)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let score = cross_correlation(inst.x_true.view(), r.x_hat.view())?;
    let gain_mu = match (&r.d_hat, inst.params.channel.is_gain()) {
        (Some(d), true) => {
            let truth = inst.d_true.view().insert_axis(Axis(1));
            cross_correlation(truth, d.view().insert_axis(Axis(1))).ok().map(|s| s.mu)
        }
        _ => None,
    };
    let outcome = RunOutcome {
        score,
        iterations: r.iterations,
        converged: r.converged,
        divergence: r.divergence.clone(),
        wall_ms,
        gain_mu,
        history: r.history.clone(),
    };
    Ok((r, outcome))
}

fn run_typed<S: Scalar>(params: &InstanceParams, config: &SolverConfig) -> Result<RunOutcome> {
    let inst: ProblemInstance<S> = generate(params)?;
    Ok(solve_instance(&inst, config)?.1)
}

pub fn run_params(params: &InstanceParams, config: &SolverConfig) -> Result<RunOutcome> {
    match params.field {
        Field::Real => run_typed::<f64>(params, config),
        Field::Complex => run_typed::<Complex64>(params, config),
    }
}
