use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Diurnal fish-migration diffusion bridge: control, moments, simulation,
/// observation study and calibration.
#[derive(Debug, Parser, Serialize)]
#[command(name = "fishbridge", version, about)]
pub struct Cli {
    /// Directory receiving output files and the run manifest.
    #[arg(long, global = true, env = "FISHBRIDGE_OUT_DIR", default_value = "fishbridge-out")]
    #[serde(skip)]
    pub out_dir: PathBuf,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Simulator worker threads (results do not depend on it).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Simulate the bridge or the controlled equation.
    Simulate(SimulateArgs),
    /// Closed-form and ODE mean and standard deviation of the bridge.
    Moments(MomentsArgs),
    /// Value-function coefficients and optimal controls.
    Solve(SolveArgs),
    /// Fit the unit-day model to fish-count data.
    Fit(FitArgs),
    /// Relative error of window-based daily-count estimates.
    Observe(ObserveArgs),
    /// Check the high-volatility inequality on a time grid.
    Feller(FellerArgs),
    /// Generate a synthetic fish-count dataset.
    Generate(GenerateArgs),
    /// Convergence orders of the penalized solution as the penalty vanishes.
    Rates(RatesArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArg {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `bridge`, `ustar:<eta>`, `ustar:limit` or `file:<csv with t,u>`.
    #[arg(long, default_value = "bridge")]
    pub control: String,
    /// Initial state of a controlled run (the bridge starts at 0).
    #[arg(long, default_value_t = 0.0)]
    pub x0: f64,
    /// Write the full ensemble in binary instead of a summary table.
    #[arg(long)]
    pub ensemble: bool,
    /// Node stride of the summary table (default: at most ~1000 rows).
    #[arg(long)]
    pub every: Option<usize>,
    /// Also estimate the control objective (controlled runs only).
    #[arg(long)]
    pub objective: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// Number of grid intervals on [0, T].
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1e-2)]
    pub eta: f64,
    /// Number of grid intervals on [0, T); the terminal node is excluded.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Raw counts CSV (date, bin_start, count).
    #[arg(long)]
    pub data: PathBuf,
    /// Sunrise/sunset CSV (date, sunrise, sunset).
    #[arg(long)]
    pub sun: PathBuf,
    /// Fit result path (default: `fit.json` in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Divide counts by this fixed scale instead of each day's total.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Measurement unit in minutes.
    #[arg(long, default_value_t = 10.0)]
    pub unit_minutes: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ObserveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// Window lengths.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub l: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FellerArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// Number of grid nodes on [0, T).
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 120)]
    pub days: usize,
    /// Bins per day.
    #[arg(long, default_value_t = 84)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fish per unit of the state: bin counts are Poisson with this scale.
    #[arg(long, default_value_t = 1e4)]
    pub scale: f64,
    /// First date (YYYY-MM-DD).
    #[arg(long, default_value = "2023-04-01")]
    pub start_date: String,
    /// Sunrise time (HH:MM).
    #[arg(long, default_value = "05:00")]
    pub sunrise: String,
    #[arg(long, default_value_t = 10)]
    pub bin_minutes: u32,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct RatesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArg,
    /// Penalties, decreasing.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.005,0.0025")]
    pub eta: Vec<f64>,
    /// Number of grid intervals; the interior nodes are used.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
}
