use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

/// Exit codes: 0 success, 2 configuration error, 3 precondition refusal,
/// 4 oracle failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Refused(String),
    OracleFailed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Refused(_) => 3,
            Self::OracleFailed(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Refused(m) => write!(f, "refused: {m}"),
            Self::OracleFailed(m) => write!(f, "oracle failure: {m}"),
        }
    }
}

impl From<finpop::Error> for CliError {
    fn from(e: finpop::Error) -> Self {
        match e {
            finpop::Error::SapViolation(_) | finpop::Error::NoAdmissibleQ => Self::Refused(e.to_string()),
            other => Self::Config(other.to_string()),
        }
    }
}

pub const THREADS_ENV: &str = "FINPOP_THREADS";

#[derive(Parser)]
#[command(name = "finpop", version, about = "Design-based inference for finite-population experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// First- and second-order assignment probabilities, exact.
    Probs {
        #[arg(long)]
        config: PathBuf,
        /// Above this many units, second-order pairs are listed for an evenly spaced subset.
        #[arg(long, default_value_t = 40)]
        max_units: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one assignment.
    Assign {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Write the assignment as `unit,treatment` CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Point and variance estimates from observed data.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// CSV with columns `unit`, `treatment`, `y` (plus optional group columns).
        #[arg(long)]
        observed: PathBuf,
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        q_file: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Condition checks and the design-level variance report for one Q.
    Check {
        #[arg(long, alias = "mech")]
        config: PathBuf,
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        q_file: Option<PathBuf>,
        #[arg(long)]
        tol_ga: Option<f64>,
        /// Second Q for the scenario bias table (strict against this one).
        #[arg(long)]
        compare: Option<String>,
        /// Also draw an assignment and report the realized estimates.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact verification by enumerating the support.
    Oracle {
        /// Named battery: grid, cr, stratified, split-plot, custom, all.
        #[arg(long, conflicts_with = "config")]
        battery: Option<String>,
        /// Verify the design, table and contrast of a run config instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo bias study over generating models.
    Simulate {
        /// Comma-separated model names (I..VI).
        #[arg(long, value_delimiter = ',', default_value = "I,II,III,IV,V,VI")]
        models: Vec<String>,
        #[arg(long, default_value_t = finpop::simulation::DEFAULT_REPS)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "30,20")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,-2,1", allow_hyphen_values = true)]
        contrast: Vec<f64>,
        /// Also draw this many stratified assignments per model and average the estimators.
        #[arg(long)]
        end_to_end: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contrast vector of a factorial effect.
    Factorial {
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        effect: Vec<u8>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Treatment means and contrast estimate for one assignment.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, required_unless_present = "partition")]
        seed: Option<u64>,
        /// CSV `unit,treatment` giving the assignment.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact sampling variance (and covariance with a second contrast).
    Variance {
        #[arg(long)]
        config: PathBuf,
        /// Second contrast as `label=coef,label=coef`.
        #[arg(long)]
        with: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn emit(json: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, json).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Probs { config, max_units, out } => commands::probs(&config, max_units, out.as_deref()),
        Command::Assign { config, seed, csv, out } => commands::assign(&config, seed, csv.as_deref(), out.as_deref()),
        Command::Analyze {
            config,
            observed,
            q,
            q_file,
            out,
        } => commands::analyze(&config, &observed, q.as_deref(), q_file.as_deref(), out.as_deref()),
        Command::Check {
            config,
            q,
            q_file,
            tol_ga,
            compare,
            seed,
            out,
        } => commands::check(
            &config,
            q.as_deref(),
            q_file.as_deref(),
            tol_ga,
            compare.as_deref(),
            seed,
            out.as_deref(),
        ),
        Command::Oracle {
            battery,
            config,
            seed,
            out,
        } => commands::oracle(battery.as_deref(), config.as_deref(), seed, out.as_deref()),
        Command::Simulate {
            models,
            reps,
            seed,
            sizes,
            contrast,
            end_to_end,
            out,
        } => commands::simulate(&models, reps, seed, &sizes, &contrast, end_to_end, &out),
        Command::Factorial { levels, effect, out } => commands::factorial(&levels, &effect, out.as_deref()),
        Command::Estimate {
            config,
            seed,
            partition,
            out,
        } => commands::estimate(&config, seed, partition.as_deref(), out.as_deref()),
        Command::Variance { config, with, out } => commands::variance(&config, with.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("finpop: {e}");
            ExitCode::from(e.code())
        }
    }
}
