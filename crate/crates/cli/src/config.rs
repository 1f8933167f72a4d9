//! JSON configuration for solves and sweeps.

use std::path::{Path, PathBuf};

use calamp_core::channels::ChannelKind;
use calamp_core::synth::InstanceParams;
use calamp_core::{Field, SignalPrior, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_instances() -> usize {
    3
}

/// Grids used when a sweep config leaves them out.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

pub fn default_alpha_grid() -> Vec<f64> {
    (2..=20).map(|k| k as f64 * 0.05).collect()
}

pub fn default_n(field: Field) -> usize {
    match field {
        Field::Real => 1000,
        Field::Complex => 500,
    }
}

/// Field a run uses: the channel's own, else the configured one, else real.
pub fn resolve_field(channel: &ChannelKind, requested: Option<Field>) -> Result<Field> {
    match (channel.field(), requested) {
        (Some(c), Some(r)) if c != r => {
            Err(CliError::Config(format!("channel needs the {c:?} field but {r:?} was requested")))
        }
        (Some(c), _) => Ok(c),
        (None, r) => Ok(r.unwrap_or(Field::Real)),
    }
}

fn check_schema(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(CliError::Config(format!("schema_version {v} is not supported (expected {SCHEMA_VERSION})")));
    }
    Ok(())
}

fn check_grid(name: &str, grid: &[f64], lo: f64, hi: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(CliError::Config(format!("{name} grid is empty")));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(CliError::Config(format!("{name} grid must be strictly increasing ({} then {})", w[0], w[1])));
    }
    if let Some(v) = grid.iter().find(|v| !(**v > lo && **v <= hi)) {
        return Err(CliError::Config(format!("{name} value {v} outside ({lo}, {hi}]")));
    }
    Ok(())
}

/// Empirical compressed-sensing transition used by the calibrated bound lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaCsConfig {
    pub n: usize,
    #[serde(default = "default_instances")]
    pub seeds: usize,
    /// Bisection halvings of `[ρ, 1]`.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// CSV cache reused across runs with the same settings.
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

fn default_steps() -> usize {
    6
}

impl AlphaCsConfig {
    pub fn new(n: usize) -> Self {
        AlphaCsConfig { n, seeds: default_instances(), steps: default_steps(), master_seed: 0, cache: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.seeds == 0 || self.steps == 0 {
            return Err(CliError::Config("alpha_cs needs n, seeds and steps all positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default)]
    pub alpha_cs: Option<AlphaCsConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_rho_grid")]
    pub rho: Vec<f64>,
    #[serde(default = "default_alpha_grid")]
    pub alpha: Vec<f64>,
    pub p: Vec<usize>,
    pub channel: ChannelKind,
    #[serde(default)]
    pub field: Option<Field>,
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default = "default_instances")]
    pub instances_per_cell: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Defaults to the channel's damping with the standard tolerances.
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// When false the `wall_ms` column is written as 0, making the CSV
    /// byte-reproducible.
    #[serde(default = "yes")]
    pub record_wall_time: bool,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

impl SweepConfig {
    pub fn new(channel: ChannelKind, rho: Vec<f64>, alpha: Vec<f64>, p: Vec<usize>) -> Self {
        SweepConfig {
            schema_version: SCHEMA_VERSION,
            n: None,
            rho,
            alpha,
            p,
            channel,
            field: None,
            sigma2: 1.0,
            instances_per_cell: default_instances(),
            master_seed: 0,
            solver: None,
            output_dir: None,
            record_wall_time: true,
            bounds: BoundsConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        check_grid("rho", &self.rho, 0.0, 1.0)?;
        check_grid("alpha", &self.alpha, 0.0, f64::INFINITY)?;
        if self.p.is_empty() {
            return Err(CliError::Config("P list is empty".into()));
        }
        if self.p.windows(2).any(|w| w[0] >= w[1]) || self.p[0] == 0 {
            return Err(CliError::Config("P list must be positive and strictly increasing".into()));
        }
        if self.instances_per_cell == 0 {
            return Err(CliError::Config("instances_per_cell must be at least 1".into()));
        }
        if self.n == Some(0) {
            return Err(CliError::Config("n must be positive".into()));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(CliError::Config(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        self.channel.validate()?;
        resolve_field(&self.channel, self.field)?;
        self.solver().validate()?;
        if let Some(a) = &self.bounds.alpha_cs {
            a.validate()?;
        }
        Ok(())
    }

    pub fn field(&self) -> Field {
        resolve_field(&self.channel, self.field).unwrap_or(Field::Real)
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or_else(|| default_n(self.field()))
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.unwrap_or_else(|| SolverConfig::with_beta(self.channel.default_damping()))
    }

    pub fn prior(&self, rho: f64) -> SignalPrior {
        SignalPrior::for_field(self.field(), rho, self.sigma2)
    }

    pub fn cells(&self) -> usize {
        self.rho.len() * self.alpha.len() * self.p.len() * self.instances_per_cell
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let c: SweepConfig =
            serde_json::from_str(text).map_err(|source| CliError::ConfigParse { path: origin.into(), source })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text, path)
    }
}

/// One instance to generate and solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub schema_version: u32,
    pub n: usize,
    pub alpha: f64,
    pub rho: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
    pub p: usize,
    pub channel: ChannelKind,
    #[serde(default)]
    pub field: Option<Field>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        self.params()?;
        self.solver().validate()?;
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.unwrap_or_else(|| SolverConfig::with_beta(self.channel.default_damping()))
    }

    pub fn params(&self) -> Result<InstanceParams> {
        let field = resolve_field(&self.channel, self.field)?;
        let prior = SignalPrior::for_field(field, self.rho, self.sigma2);
        Ok(InstanceParams::new(self.n, self.alpha, self.p, prior, self.channel, self.seed)?)
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let c: SolveConfig =
            serde_json::from_str(text).map_err(|source| CliError::ConfigParse { path: origin.into(), source })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text, path)
    }
}
