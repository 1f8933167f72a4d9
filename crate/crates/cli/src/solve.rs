//! The `solve` subcommand: one instance, a JSON report, optional dumps.

use std::io::Write;
use std::path::{Path, PathBuf};

use calamp_core::solver::{Diagnostics, DivergenceReport};
use calamp_core::synth::{generate, InstanceParams};
use calamp_core::{Field, ProblemInstance, Scalar, SolverConfig};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::run::solve_instance;

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub params: InstanceParams,
    pub solver: SolverConfig,
    pub mu: f64,
    pub log10_gap: f64,
    pub success: bool,
    pub per_column_mu: Vec<f64>,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub divergence: Option<DivergenceReport>,
    pub wall_ms: f64,
    pub gain_mu: Option<f64>,
    pub history: Vec<Diagnostics>,
}

#[derive(Clone, Debug, Default)]
pub struct Dumps {
    pub instance: Option<PathBuf>,
    pub estimates: Option<PathBuf>,
}

/// Writes `x̂` as CSV, one row per signal entry. Complex entries take two
/// columns per sample.
pub fn write_estimates<S: Scalar>(path: &Path, x_hat: &Array2<S>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(CliError::io(path))?);
    let header: Vec<String> = (0..x_hat.ncols())
        .flat_map(|l| if S::is_complex() { vec![format!("re{l}"), format!("im{l}")] } else { vec![format!("x{l}")] })
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(CliError::io(path))?;
    for row in x_hat.rows() {
        let cells: Vec<String> = row
            .iter()
            .flat_map(|v| if S::is_complex() { vec![v.re().to_string(), v.im().to_string()] } else { vec![v.re().to_string()] })
            .collect();
        writeln!(w, "{}", cells.join(",")).map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

fn solve_typed<S: Scalar>(params: &InstanceParams, solver: &SolverConfig, dumps: &Dumps) -> Result<SolveReport> {
    let inst: ProblemInstance<S> = generate(params)?;
    if let Some(p) = &dumps.instance {
        inst.dump(p)?;
    }
    let (result, run) = solve_instance(&inst, solver)?;
    if let Some(p) = &dumps.estimates {
        write_estimates(p, &result.x_hat)?;
    }
    Ok(SolveReport {
        params: params.clone(),
        solver: *solver,
        mu: run.score.mu,
        log10_gap: run.score.log10_gap,
        success: run.success(),
        per_column_mu: run.score.per_column_mu,
        mse: run.score.mse,
        iterations: run.iterations,
        converged: run.converged,
        divergence: run.divergence,
        wall_ms: run.wall_ms,
        gain_mu: run.gain_mu,
        history: run.history,
    })
}

pub fn solve_report(params: &InstanceParams, solver: &SolverConfig, dumps: &Dumps) -> Result<SolveReport> {
    match params.field {
        Field::Real => solve_typed::<f64>(params, solver, dumps),
        Field::Complex => solve_typed::<Complex64>(params, solver, dumps),
    }
}

/// The `gen` subcommand: generate and dump without solving.
pub fn generate_to(params: &InstanceParams, path: &Path) -> Result<()> {
    match params.field {
        Field::Real => generate::<f64>(params)?.dump(path)?,
        Field::Complex => generate::<Complex64>(params)?.dump(path)?,
    }
    Ok(())
}
