//! Empirical compressed-sensing transition `α_CS(ρ)` of the calibrated
//! solver, with an on-disk cache.

use std::collections::BTreeMap;
use std::path::Path;

use calamp_core::bounds::bisect_transition;
use calamp_core::channels::ChannelKind;
use calamp_core::synth::InstanceParams;
use calamp_core::{SignalPrior, SolverConfig};
use rayon::prelude::*;

use crate::config::AlphaCsConfig;
use crate::error::{CliError, Result};
use crate::run::run_params;
use crate::sweep::cell_seed;
use crate::threads;

pub const CACHE_VERSION: u32 = 1;

/// Noise of the calibrated reference runs.
pub const REFERENCE_DELTA: f64 = 1e-15;

fn cache_header(cfg: &AlphaCsConfig) -> String {
    format!(
        "# calamp alpha_cs v{CACHE_VERSION} n={} seeds={} steps={} master_seed={} delta={REFERENCE_DELTA:e}",
        cfg.n, cfg.seeds, cfg.steps, cfg.master_seed
    )
}

/// Whether a majority of calibrated real instances recover at `(ρ, α)`.
pub fn calibrated_succeeds(rho: f64, alpha: f64, cfg: &AlphaCsConfig) -> Result<bool> {
    let mut wins = 0;
    for rep in 0..cfg.seeds {
        let seed = cell_seed(cfg.master_seed, rho.to_bits() as usize, alpha.to_bits() as usize, 1, rep);
        let params = InstanceParams::new(
            cfg.n,
            alpha,
            1,
            SignalPrior::real(rho),
            ChannelKind::Calibrated { delta: REFERENCE_DELTA },
            seed,
        )?;
        if run_params(&params, &SolverConfig::default())?.success() {
            wins += 1;
        }
    }
    Ok(2 * wins > cfg.seeds)
}

/// Bisection over `α ∈ [ρ, 1]`.
pub fn estimate(rho: f64, cfg: &AlphaCsConfig) -> Result<f64> {
    let mut err = None;
    let a = bisect_transition(rho, 1.0, cfg.steps, |alpha| match calibrated_succeeds(rho, alpha, cfg) {
        Ok(s) => s,
        Err(e) => {
            err.get_or_insert(e);
            true
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(a),
    }
}

fn read_cache(path: &Path, cfg: &AlphaCsConfig) -> BTreeMap<u64, f64> {
    let mut out = BTreeMap::new();
    let Ok(text) = std::fs::read_to_string(path) else {
        return out;
    };
    let mut lines = text.lines();
    if lines.next() != Some(cache_header(cfg).as_str()) || lines.next() != Some("rho,alpha_cs") {
        return out;
    }
    for line in lines {
        if let Some((r, a)) = line.split_once(',') {
            if let (Ok(r), Ok(a)) = (r.parse::<f64>(), a.parse::<f64>()) {
                out.insert(r.to_bits(), a);
            }
        }
    }
    out
}

fn write_cache(path: &Path, cfg: &AlphaCsConfig, table: &BTreeMap<u64, f64>) -> Result<()> {
    let mut rows: Vec<(f64, f64)> = table.iter().map(|(&r, &a)| (f64::from_bits(r), a)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut text = format!("{}\nrho,alpha_cs\n", cache_header(cfg));
    for (r, a) in rows {
        text.push_str(&format!("{r},{a}\n"));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    std::fs::write(path, text).map_err(CliError::io(path))
}

/// `(ρ, α_CS(ρ))` for each `ρ`, reusing and extending the cache when one is
/// configured. A cache written with other settings is ignored.
pub fn curve(rhos: &[f64], cfg: &AlphaCsConfig, threads: usize) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let mut table = cfg.cache.as_deref().map(|p| read_cache(p, cfg)).unwrap_or_default();
    let missing: Vec<f64> = rhos.iter().copied().filter(|r| !table.contains_key(&r.to_bits())).collect();
    if !missing.is_empty() {
        let pool = threads::pool(threads)?;
        let fresh: Vec<Result<(f64, f64)>> =
            pool.install(|| missing.par_iter().map(|&r| estimate(r, cfg).map(|a| (r, a))).collect());
        for f in fresh {
            let (r, a) = f?;
            table.insert(r.to_bits(), a);
        }
        if let Some(path) = &cfg.cache {
            write_cache(path, cfg, &table)?;
        }
    }
    Ok(rhos.iter().map(|r| (*r, table[&r.to_bits()])).collect())
}
