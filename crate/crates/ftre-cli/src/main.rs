//! Command-line driver for the ftre resource estimator.
//!
//! Subcommands:
//! - `estimate`: run the full pipeline on one circuit and write report files.
//! - `sweep`: evaluate a Cartesian product of configurations into `sweep.csv`.
//! - `sensitivity`: emit the budget surface over (d, eps_rz) for one circuit.
//! - `layout`: generate a layout, render it, and write the native layout file.
//!
//! Exit codes: 0 success, 1 configuration error, 2 infeasible budget,
//! 3..=12 per-module pipeline errors, 64 command-line usage error.

mod pipeline;
mod resolve;
mod sweep;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ftre::{LayoutStrategy, SpeedColumn};

/// CLI-level failure: either a configuration problem surfaced by this crate
/// or an error bubbled up from the core pipeline.
pub enum CliError {
    Config(String),
    Core(ftre::Error),
}

impl From<ftre::Error> for CliError {
    fn from(e: ftre::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(ftre::Error::Io(e))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &ftre::Error) -> u8 {
    use ftre::Error as E;
    match e {
        E::Infeasible { .. } => 2,
        E::Ingest(_) => 3,
        E::Stage1(_) => 4,
        E::Synthesis(_) => 5,
        E::Budget(_) => 6,
        E::Arch(_) => 7,
        E::Layout(_) => 8,
        E::Compile(_) => 9,
        E::Report(_) => 10,
        E::Validation(_) => 11,
        E::Io(_) => 12,
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Parser)]
#[command(
    name = "ftre",
    version,
    about = "Compilation-driven resource estimator for early fault-tolerant quantum programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on one circuit and write report files.
    Estimate(EstimateArgs),
    /// Evaluate a Cartesian sweep of configurations into sweep.csv.
    Sweep(sweep::SweepArgs),
    /// Emit the error-budget sensitivity surface for one circuit.
    Sensitivity(SensitivityArgs),
    /// Generate a layout, render it, and write the native layout file.
    Layout(LayoutArgs),
}

/// Architecture selection shared by every pipeline subcommand.
#[derive(Args, Clone)]
pub struct ArchFlags {
    /// Architecture: `preset:NAME[@COLUMN]` or a path to a JSON config file.
    #[arg(long)]
    pub arch: String,

    /// Force the folded or unfolded cultivation variant of a preset.
    #[arg(long, value_enum)]
    pub folded: Option<OnOff>,

    /// Decoding mode: correlated needs one syndrome round per primitive,
    /// standard needs d rounds.
    #[arg(long, value_enum)]
    pub decoding: Option<DecodingArg>,

    /// Speed column of a preset's timing table.
    #[arg(long, value_enum)]
    pub speeds: Option<SpeedsArg>,

    /// Override the code distance chosen by the budget solver.
    #[arg(long)]
    pub d: Option<u32>,
}

/// Layout overrides shared by the pipeline subcommands.
#[derive(Args, Clone)]
pub struct LayoutFlags {
    /// Placement strategy; defaults to the architecture's preference.
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,

    /// Number of T factories.
    #[arg(long = "factories-t")]
    pub factories_t: Option<u32>,

    /// Number of S factories.
    #[arg(long = "factories-s")]
    pub factories_s: Option<u32>,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Input circuit (.qasm or native .json).
    #[arg(long)]
    pub circuit: PathBuf,

    #[command(flatten)]
    pub arch: ArchFlags,

    /// Total circuit error budget, in (0,1).
    #[arg(long)]
    pub error: f64,

    /// Budget selection procedure.
    #[arg(long, value_enum, default_value_t = BudgetArg::Halving)]
    pub budget: BudgetArg,

    #[command(flatten)]
    pub layout: LayoutFlags,

    /// Output directory for report files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,

    /// Also write the intermediate circuits (c1, c2, primitive) as native JSON.
    #[arg(long)]
    pub emit_intermediate: bool,
}

#[derive(Args)]
pub struct SensitivityArgs {
    /// Input circuit (.qasm or native .json).
    #[arg(long)]
    pub circuit: PathBuf,

    #[command(flatten)]
    pub arch: ArchFlags,

    /// Total circuit error budget, in (0,1).
    #[arg(long)]
    pub error: f64,

    /// Smallest code distance on the grid (odd).
    #[arg(long, default_value_t = 3)]
    pub d_min: u32,

    /// Largest code distance on the grid (odd).
    #[arg(long, default_value_t = 25)]
    pub d_max: u32,

    /// Smallest synthesis accuracy on the grid.
    #[arg(long, default_value_t = 1e-8)]
    pub eps_rz_min: f64,

    /// Largest synthesis accuracy on the grid.
    #[arg(long, default_value_t = 1e-3)]
    pub eps_rz_max: f64,

    /// Logarithmic grid density along the eps_rz axis.
    #[arg(long, default_value_t = 4)]
    pub points_per_decade: u32,

    /// Output directory for surface.csv and budget.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct LayoutArgs {
    /// Placement strategy.
    #[arg(long, value_enum)]
    pub layout: LayoutArg,

    /// Number of data qubits to place.
    #[arg(long)]
    pub data: u32,

    /// Number of T factories.
    #[arg(long = "factories-t", default_value_t = 0)]
    pub factories_t: u32,

    /// Number of S factories.
    #[arg(long = "factories-s", default_value_t = 0)]
    pub factories_s: u32,

    /// Output directory for layout.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodingArg {
    Correlated,
    Standard,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpeedsArg {
    Current,
    Proposed,
}

impl From<SpeedsArg> for SpeedColumn {
    fn from(s: SpeedsArg) -> Self {
        match s {
            SpeedsArg::Current => SpeedColumn::Current,
            SpeedsArg::Proposed => SpeedColumn::Proposed,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BudgetArg {
    Halving,
    Grid,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Dense,
    Column,
    Embedded,
    Sandwich,
}

impl From<LayoutArg> for LayoutStrategy {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Dense => LayoutStrategy::Dense,
            LayoutArg::Column => LayoutStrategy::Column,
            LayoutArg::Embedded => LayoutStrategy::Embedded,
            LayoutArg::Sandwich => LayoutStrategy::Sandwich,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; anything else is a
            // usage error and must not collide with pipeline exit codes.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Estimate(args) => pipeline::run_estimate(&args),
        Command::Sweep(args) => sweep::run_sweep(&args),
        Command::Sensitivity(args) => pipeline::run_sensitivity(&args),
        Command::Layout(args) => pipeline::run_layout(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
