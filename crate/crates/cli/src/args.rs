use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lpr_core::dynamics::Mode;
use lpr_core::systems::BuiltinKind;
use lpr_core::verify::Criterion;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LPR_OUT_DIR";

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("LPR_GIT_DESCRIBE"), ")");

#[derive(Debug, Parser)]
#[command(
    name = "lpr",
    version = VERSION,
    about = "Reduced (Lagrange-Poincare) and unreduced simulation of invariant mechanical systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one system in reduced or original coordinates.
    Simulate(SimulateArgs),
    /// Run the acceptance checks and write a JSON report.
    Verify(VerifyArgs),
    /// Dump every geometric object at one point.
    Inspect(InspectArgs),
    /// Integrate in both modes and tabulate the deviation.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct SystemArgs {
    /// Built-in system with default parameters.
    #[arg(long, value_name = "NAME")]
    pub system: Option<BuiltinKind>,
    /// TOML system configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV, default_value = "lpr-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IntegrationArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ToleranceArgs {
    /// Multiplies every residual tolerance.
    #[arg(long, value_name = "FACTOR", default_value_t = 1.0)]
    pub tol_scale: f64,
}

/// Inline initial state; components are comma separated.
#[derive(Debug, Clone, Default, Args)]
pub struct InitialArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub q: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub f: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub q_dot: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub f_dot: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value = "reduced")]
    pub mode: Mode,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub initial: InitialArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub tolerance: ToleranceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Restrict to these checks (name or number); repeatable.
    #[arg(long = "check", value_name = "CHECK")]
    pub checks: Vec<Criterion>,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub tolerance: ToleranceArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Ambient point `Q`; defaults to the configured initial state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub q: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub f: Option<Vec<f64>>,
    /// Group coordinates replacing the ones solved from `Q`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub a: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub initial: InitialArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub tolerance: ToleranceArgs,
}
