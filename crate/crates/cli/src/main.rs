use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use calamp_cli::config::{SolveConfig, SweepConfig, SCHEMA_VERSION};
use calamp_cli::selfcheck::{run_all, SelfcheckOptions};
use calamp_cli::solve::{generate_to, solve_report, Dumps};
use calamp_cli::sweep::{run_sweep, write_outputs};
use calamp_cli::{threads, CliError, Result};
use calamp_core::channels::ChannelKind;
use calamp_core::priors::DEFAULT_COMPLEX_GAIN_VARIANCE;
use calamp_core::{GainPrior, SolverConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "calamp", version, about = "Blind calibration by approximate message passing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one instance, solve it and print a JSON report.
    Solve(SolveArgs),
    /// Sweep a (rho, alpha) grid and write results.csv, summary.json and bound curves.
    PhaseDiagram(SweepArgs),
    /// Run the oracle suites; exits nonzero if any fails.
    Selfcheck(SelfcheckArgs),
    /// Generate one instance and write it in the binary dump format.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Gain,
    ComplexGain,
    Faulty,
    Calibrated,
}

#[derive(Args)]
struct InstanceArgs {
    /// JSON file with a full solve configuration; replaces the flags below.
    #[arg(long, conflicts_with_all = ["n", "alpha", "rho", "p", "channel"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    alpha: Option<f64>,
    #[arg(long, required_unless_present = "config")]
    rho: Option<f64>,
    #[arg(long, required_unless_present = "config")]
    p: Option<usize>,
    #[arg(long, value_enum, required_unless_present = "config")]
    channel: Option<ChannelArg>,
    /// Width of the uniform gain prior.
    #[arg(long, default_value_t = 1.0)]
    wd: f64,
    #[arg(long, default_value_t = 1e-15)]
    delta: f64,
    /// Fraction of faulty sensors.
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Damping; defaults to the channel's own.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tmax: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

impl InstanceArgs {
    fn resolve(&self) -> Result<SolveConfig> {
        if let Some(path) = &self.config {
            return SolveConfig::load(path);
        }
        let missing = || CliError::Config("missing instance flags".into());
        let channel = match self.channel.ok_or_else(missing)? {
            ChannelArg::Gain => ChannelKind::RealGain { delta: self.delta, gain_prior: GainPrior::uniform(self.wd) },
            ChannelArg::ComplexGain => ChannelKind::ComplexGain {
                delta: self.delta,
                gain_prior: GainPrior::ComplexNormal { complex_gain_variance: DEFAULT_COMPLEX_GAIN_VARIANCE },
            },
            ChannelArg::Faulty => ChannelKind::Faulty { epsilon: self.epsilon, m_f: 0.0, sigma_f: None },
            ChannelArg::Calibrated => ChannelKind::Calibrated { delta: self.delta },
        };
        let mut solver = SolverConfig::with_beta(self.beta.unwrap_or(channel.default_damping()));
        if let Some(t) = self.tmax {
            solver.t_max = t;
        }
        if let Some(t) = self.tol {
            solver.tol = t;
        }
        let c = SolveConfig {
            schema_version: SCHEMA_VERSION,
            n: self.n.ok_or_else(missing)?,
            alpha: self.alpha.ok_or_else(missing)?,
            rho: self.rho.ok_or_else(missing)?,
            sigma2: self.sigma2,
            p: self.p.ok_or_else(missing)?,
            channel,
            field: None,
            seed: self.seed,
            solver: Some(solver),
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_instance: Option<PathBuf>,
    /// CSV of the estimated signal.
    #[arg(long)]
    dump_estimates: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count; overrides CALAMP_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    out: PathBuf,
}

fn write_json(value: &impl serde::Serialize, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(CliError::io(p)),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("stdout")(e)),
            _ => Ok(()),
        },
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve(a) => {
            let c = a.instance.resolve()?;
            let dumps = Dumps { instance: a.dump_instance, estimates: a.dump_estimates };
            let report = solve_report(&c.params()?, &c.solver(), &dumps)?;
            write_json(&report, a.out.as_ref())?;
            Ok(true)
        }
        Command::PhaseDiagram(a) => {
            let config = SweepConfig::load(&a.config)?;
            let dir = a
                .out
                .or_else(|| config.output_dir.clone())
                .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))?;
            let workers = a.threads.filter(|&t| t > 0).unwrap_or_else(threads::worker_count);
            eprintln!("{} runs on {} workers", config.cells(), workers);
            let result = run_sweep(&config, workers)?;
            let files = write_outputs(&result, &dir)?;
            for f in &result.summary.failures {
                eprintln!("run failed at rho={} alpha={} P={} seed={}: {}", f.rho, f.alpha, f.p, f.seed, f.error);
            }
            eprintln!("wrote {}", files.csv.display());
            Ok(true)
        }
        Command::Selfcheck(a) => {
            let opts = SelfcheckOptions { cases: a.cases, complex_cases: a.cases, seed: a.seed, ..Default::default() };
            let report = run_all(&opts)?;
            for s in &report.suites {
                println!("{}", s.line());
            }
            Ok(report.passed())
        }
        Command::Gen(a) => {
            let c = a.instance.resolve()?;
            generate_to(&c.params()?, &a.out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
