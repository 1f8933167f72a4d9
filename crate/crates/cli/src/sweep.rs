//! Parallel phase-diagram sweeps over `(ρ, α, P)` cells.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use calamp_core::bounds::{BoundCurve, BoundKind};
use calamp_core::channels::ChannelKind;
use calamp_core::synth::InstanceParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha_cs;
use crate::config::{SweepConfig, SCHEMA_VERSION};
use crate::error::{CliError, Result};
use crate::run::run_params;
use crate::threads;

pub const CSV_HEADER: &str = "rho,alpha,P,seed,mu,log10_gap,success,iters,converged,wall_ms";

/// One solved instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub rho: f64,
    pub alpha: f64,
    #[serde(rename = "P")]
    pub p: usize,
    pub seed: u64,
    pub mu: f64,
    pub log10_gap: f64,
    pub success: bool,
    pub iters: usize,
    pub converged: bool,
    pub wall_ms: f64,
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one replicate, a function of its grid position only.
pub fn cell_seed(master: u64, rho_index: usize, alpha_index: usize, p: usize, replicate: usize) -> u64 {
    [rho_index as u64, alpha_index as u64, p as u64, replicate as u64].iter().fold(mix(master), |h, &v| mix(h ^ v))
}

#[derive(Clone, Copy, Debug)]
struct Job {
    ri: usize,
    ai: usize,
    p: usize,
    rep: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub rho: f64,
    pub alpha: f64,
    #[serde(rename = "P")]
    pub p: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub rho: f64,
    pub alpha: f64,
    #[serde(rename = "P")]
    pub p: usize,
    pub runs: usize,
    pub successes: usize,
    pub success_fraction: f64,
    pub converged_fraction: f64,
    pub median_log10_gap: f64,
}

/// Success fractions along `α` at fixed `(P, ρ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityRow {
    #[serde(rename = "P")]
    pub p: usize,
    pub rho: f64,
    pub fractions: Vec<f64>,
    /// Adjacent steps where the fraction drops.
    pub drops: usize,
    /// Cells that must be removed to leave a nondecreasing sequence.
    pub excess_cells: usize,
}

impl MonotonicityRow {
    pub fn new(p: usize, rho: f64, fractions: Vec<f64>) -> Self {
        let drops = fractions.windows(2).filter(|w| w[1] < w[0]).count();
        let excess_cells = fractions.len() - longest_nondecreasing(&fractions);
        MonotonicityRow { p, rho, fractions, drops, excess_cells }
    }

    /// Nondecreasing after discarding at most one cell.
    pub fn acceptable(&self) -> bool {
        self.excess_cells <= 1
    }
}

fn longest_nondecreasing(v: &[f64]) -> usize {
    let mut tails: Vec<f64> = Vec::new();
    for &x in v {
        let k = tails.partition_point(|&t| t <= x);
        if k == tails.len() {
            tails.push(x);
        } else {
            tails[k] = x;
        }
    }
    tails.len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config: SweepConfig,
    pub cells: Vec<CellSummary>,
    pub monotonicity: Vec<MonotonicityRow>,
    pub bounds: Vec<BoundCurve>,
    pub alpha_cs: Option<Vec<(f64, f64)>>,
    pub failures: Vec<CellFailure>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Sorted by `(ρ, α, P, seed)`.
    pub records: Vec<Record>,
    pub summary: Summary,
}

fn run_job(config: &SweepConfig, job: Job) -> (Record, Option<CellFailure>) {
    let rho = config.rho[job.ri];
    let alpha = config.alpha[job.ai];
    let seed = cell_seed(config.master_seed, job.ri, job.ai, job.p, job.rep);
    let outcome = InstanceParams::new(config.n(), alpha, job.p, config.prior(rho), config.channel, seed)
        .map_err(CliError::from)
        .and_then(|params| run_params(&params, &config.solver()));
    match outcome {
        Ok(o) => (
            Record {
                rho,
                alpha,
                p: job.p,
                seed,
                mu: o.score.mu,
                log10_gap: o.score.log10_gap,
                success: o.success(),
                iters: o.iterations,
                converged: o.converged,
                wall_ms: if config.record_wall_time { o.wall_ms } else { 0.0 },
            },
            None,
        ),
        Err(e) => (
            Record {
                rho,
                alpha,
                p: job.p,
                seed,
                mu: f64::NAN,
                log10_gap: f64::NAN,
                success: false,
                iters: 0,
                converged: false,
                wall_ms: 0.0,
            },
            Some(CellFailure { rho, alpha, p: job.p, seed, error: e.to_string() }),
        ),
    }
}

fn sort_records(records: &mut [Record]) {
    records.sort_by(|a, b| {
        a.rho
            .total_cmp(&b.rho)
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.p.cmp(&b.p))
            .then(a.seed.cmp(&b.seed))
    });
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn summarize_cells(config: &SweepConfig, records: &[Record]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &rho in &config.rho {
        for &alpha in &config.alpha {
            for &p in &config.p {
                let rs: Vec<&Record> = records.iter().filter(|r| r.rho == rho && r.alpha == alpha && r.p == p).collect();
                let runs = rs.len();
                let successes = rs.iter().filter(|r| r.success).count();
                let converged = rs.iter().filter(|r| r.converged).count();
                cells.push(CellSummary {
                    rho,
                    alpha,
                    p,
                    runs,
                    successes,
                    success_fraction: successes as f64 / runs.max(1) as f64,
                    converged_fraction: converged as f64 / runs.max(1) as f64,
                    median_log10_gap: median(rs.iter().map(|r| r.log10_gap).collect()),
                });
            }
        }
    }
    cells
}

pub fn monotonicity(config: &SweepConfig, cells: &[CellSummary]) -> Vec<MonotonicityRow> {
    let mut rows = Vec::new();
    for &p in &config.p {
        for &rho in &config.rho {
            let fractions = config
                .alpha
                .iter()
                .map(|&a| {
                    cells
                        .iter()
                        .find(|c| c.p == p && c.rho == rho && c.alpha == a)
                        .map_or(0.0, |c| c.success_fraction)
                })
                .collect();
            rows.push(MonotonicityRow::new(p, rho, fractions));
        }
    }
    rows
}

/// Reference lines that apply to the sweep's channel. Lines needing `α_CS`
/// appear only when `alpha_cs` is given.
pub fn bound_curves(config: &SweepConfig, alpha_cs: Option<&[(f64, f64)]>) -> Result<Vec<BoundCurve>> {
    let lookup = |rho: f64| {
        alpha_cs.and_then(|t| t.iter().find(|(r, _)| *r == rho).map(|(_, a)| *a)).unwrap_or(f64::NAN)
    };
    let mut curves = Vec::new();
    match config.channel {
        ChannelKind::RealGain { .. } | ChannelKind::ComplexGain { .. } => {
            for &p in config.p.iter().filter(|&&p| p >= 2) {
                let rhos: Vec<f64> =
                    config.rho.iter().copied().filter(|&r| r < (p as f64 - 1.0) / p as f64).collect();
                if !rhos.is_empty() {
                    curves.push(BoundCurve::build(BoundKind::AlphaMin { p }, &rhos, &lookup)?);
                }
            }
            if alpha_cs.is_some() {
                curves.push(BoundCurve::build(BoundKind::AlphaCalGain, &config.rho, &lookup)?);
            }
        }
        ChannelKind::Faulty { epsilon, .. } => {
            if alpha_cs.is_some() && epsilon < 1.0 {
                curves.push(BoundCurve::build(BoundKind::AlphaCalFaulty { epsilon }, &config.rho, &lookup)?);
            }
        }
        ChannelKind::Calibrated { .. } => {
            if alpha_cs.is_some() {
                curves.push(BoundCurve::build(BoundKind::AlphaCalGain, &config.rho, &lookup)?);
            }
        }
    }
    Ok(curves)
}

/// Runs every `(ρ, α, P, replicate)` job on `threads` workers. Instance
/// failures become NaN records listed in the summary; the sweep continues.
pub fn run_sweep(config: &SweepConfig, threads: usize) -> Result<SweepResult> {
    config.validate()?;
    let mut jobs = Vec::with_capacity(config.cells());
    for ri in 0..config.rho.len() {
        for ai in 0..config.alpha.len() {
            for &p in &config.p {
                for rep in 0..config.instances_per_cell {
                    jobs.push(Job { ri, ai, p, rep });
                }
            }
        }
    }
    let pool = threads::pool(threads)?;
    let (tx, rx) = mpsc::channel();
    pool.install(|| {
        jobs.par_iter().for_each_with(tx, |tx, &job| {
            // The receiver outlives the pool, so sending cannot fail.
            let _ = tx.send(run_job(config, job));
        })
    });
    let (mut records, mut failures): (Vec<Record>, Vec<CellFailure>) = (Vec::new(), Vec::new());
    for (r, f) in rx {
        records.push(r);
        failures.extend(f);
    }
    sort_records(&mut records);
    failures.sort_by(|a, b| a.rho.total_cmp(&b.rho).then(a.alpha.total_cmp(&b.alpha)).then(a.seed.cmp(&b.seed)));

    let alpha_cs = match &config.bounds.alpha_cs {
        Some(cs) => Some(alpha_cs::curve(&config.rho, cs, threads)?),
        None => None,
    };
    let cells = summarize_cells(config, &records);
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        monotonicity: monotonicity(config, &cells),
        bounds: bound_curves(config, alpha_cs.as_deref())?,
        cells,
        alpha_cs,
        failures,
    };
    Ok(SweepResult { records, summary })
}

pub fn write_records<W: Write>(w: W, records: &[Record]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    if records.is_empty() {
        out.write_record(CSV_HEADER.split(','))?;
    }
    out.flush().map_err(CliError::io("csv output"))?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<Record>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(CliError::Config(format!("unexpected CSV header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<Record>> {
    read_records(std::fs::File::open(path).map_err(CliError::io(path))?)
}

/// Output file names inside a sweep directory.
pub struct SweepFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub bounds: Vec<PathBuf>,
}

fn bound_file_name(kind: &BoundKind) -> String {
    match kind {
        BoundKind::AlphaMin { p } => format!("bound_alpha_min_p{p}.csv"),
        BoundKind::AlphaCalFaulty { epsilon } => format!("bound_alpha_cal_faulty_eps{epsilon}.csv"),
        BoundKind::AlphaCalGain => "bound_alpha_cal_gain.csv".into(),
    }
}

pub fn write_outputs(result: &SweepResult, dir: &Path) -> Result<SweepFiles> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let csv = dir.join("results.csv");
    let file = std::fs::File::create(&csv).map_err(CliError::io(&csv))?;
    write_records(std::io::BufWriter::new(file), &result.records)?;
    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&result.summary)?;
    std::fs::write(&summary, text).map_err(CliError::io(&summary))?;
    let mut bounds = Vec::new();
    for curve in &result.summary.bounds {
        let path = dir.join(bound_file_name(&curve.kind));
        std::fs::write(&path, curve.to_csv()).map_err(CliError::io(&path))?;
        bounds.push(path);
    }
    Ok(SweepFiles { csv, summary, bounds })
}
