mod commands;
mod output;
mod tgrid;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perptail::QLaw;
use serde::Serialize;

use output::Format;
use tgrid::TGrid;

/// Tail asymptotics, exact densities and simulation for Dickman-type perpetuities.
#[derive(Debug, Parser)]
#[command(name = "perptail", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,
    /// Write the result here (plus `PATH.manifest.json`) instead of stdout.
    #[arg(long, value_name = "PATH", global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TArgs {
    /// Single evaluation point.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "t_grid", required_unless_present = "t_grid")]
    pub t: Option<f64>,
    /// Grid `START:STOP:POINTS[,log|,lin]`.
    #[arg(long, value_name = "START:STOP:POINTS,log")]
    pub t_grid: Option<TGrid>,
}

impl TArgs {
    pub fn values(&self) -> Vec<f64> {
        match (self.t, self.t_grid) {
            (Some(t), _) => vec![t],
            (None, Some(g)) => g.values(),
            (None, None) => Vec::new(),
        }
    }
}

fn parse_law(s: &str) -> Result<QLaw, String> {
    s.parse::<QLaw>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Salpha,
    K5,
    K3,
    Verv,
    Ex4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ex4Quantity {
    S,
    Logdensity,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Saddle point s with psi'(s) = t: columns t,s,residual,iterations.
    Saddle(SaddleArgs),
    /// Saddle-point tail estimates: columns t,s,exponent,log_density,log_tail[,I][,debruijn].
    Tail(TailArgs),
    /// Closed-form expansions against their solver references.
    Expand(ExpandArgs),
    /// Exact density grid for a point-mass Q.
    Dens(DensArgs),
    /// Monte Carlo simulation of the perpetuity.
    Sim(SimArgs),
    /// Runs the acceptance suite; exit code 2 if any criterion fails.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaddleArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Law of Q, e.g. `pointmass:b=1`, `twopoint:b=1,p=0.5,q0=-1`,
    /// `gammashift:b=1,theta=1,lambda=1`.
    #[arg(long, value_name = "SPEC", value_parser = parse_law)]
    pub law: QLaw,
    #[command(flatten)]
    pub t: TArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TailArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, value_name = "SPEC", value_parser = parse_law)]
    pub law: QLaw,
    #[command(flatten)]
    pub t: TArgs,
    /// Add the Legendre transform I(t).
    #[arg(long)]
    pub legendre: bool,
    /// Add the de Bruijn log density at t - 1 (alpha = 1, pointmass:b=1 only).
    #[arg(long)]
    pub debruijn: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExpandArgs {
    #[arg(long, value_enum)]
    pub which: Which,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    /// `pointmass` or `twopoint` with q0 = 0 for salpha/k5/k3, `pointmass:b=1`
    /// for verv, `gammashift` for ex4.
    #[arg(long, value_name = "SPEC", value_parser = parse_law)]
    pub law: QLaw,
    #[command(flatten)]
    pub t: TArgs,
    /// Series truncation for `salpha`.
    #[arg(long, default_value_t = perptail::expand::DEFAULT_SERIES_TERMS)]
    pub terms: usize,
    /// Which gamma-shift expansion to evaluate.
    #[arg(long, value_enum, default_value_t = Ex4Quantity::S)]
    pub quantity: Ex4Quantity,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub b: f64,
    #[arg(long, default_value_t = perptail::exactdens::DEFAULT_T_MAX_OVER_B)]
    pub tmax: f64,
    /// Grid steps per length b.
    #[arg(long, default_value_t = perptail::exactdens::DEFAULT_STEPS_PER_UNIT)]
    pub steps: usize,
    /// Report points (default: 2b, 3b, ... up to tmax).
    #[arg(long, value_name = "START:STOP:POINTS,log")]
    pub t_grid: Option<TGrid>,
    /// Also write every grid node to this CSV.
    #[arg(long, value_name = "PATH.csv")]
    pub emit_grid: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, value_name = "SPEC", value_parser = parse_law)]
    pub law: QLaw,
    #[arg(long)]
    pub paths: usize,
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated MGF arguments.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub mgf_points: Vec<f64>,
    /// Stop a path once the running product of multipliers is at most this.
    #[arg(long, default_value_t = perptail::montecarlo::DEFAULT_TRUNCATION_EPS)]
    pub truncation_eps: f64,
    /// KS and moment test against Gamma(alpha + 1, c); needs `--law exp:c=C`.
    #[arg(long)]
    pub gamma_validate: bool,
    /// Write the raw samples as CSV `path,z`.
    #[arg(long, value_name = "PATH")]
    pub emit_samples: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    /// Reduced grids (t <= 50) and 1e4 simulation paths.
    #[arg(long)]
    pub quick: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{flag}: {reason}")]
    Usage { flag: &'static str, reason: String },
    #[error("validation failed")]
    Validation,
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn usage(flag: &'static str, reason: impl ToString) -> Self {
        CliError::Usage {
            flag,
            reason: reason.to_string(),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PERP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage("PERP_THREADS", format!("expected a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Other(e.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation) => {
            eprintln!("perptail: validation failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("perptail: {e}");
            ExitCode::from(1)
        }
    }
}
