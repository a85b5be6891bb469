//! The `ltmlab` command line: ingestion, training, sweep campaigns,
//! scaling-law fits, forecasting, and campaign reports.
//!
//! Exit codes: 0 success, 1 run failure (a run diverged, training or IO
//! failed mid-flight), 2 usage error (bad flags, unreadable inputs,
//! invalid plans). Every command is deterministic given identical inputs
//! and seeds, wall-clock fields aside.

mod campaign;
mod fit_cmd;
mod forecast_cmd;
mod ingest;
mod run_cmd;
mod svg;
mod sweep_cmd;

pub use campaign::{
    expand_plan, CampaignIndex, CampaignKind, ExperimentPlan, IndexEntry, Selection, SizeSpec,
};
pub use forecast_cmd::FORECAST_CSV_VERSION;
pub use run_cmd::{RunSpec, RunSummary};
pub use svg::SVG_VERSION;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

/// Overrides where `ingest` writes caches and where `train` falls back to
/// when a config's corpus path does not exist beside it.
pub const CACHE_DIR_ENV: &str = "LTMLAB_CACHE_DIR";

fn cache_root() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)
}

#[derive(Debug)]
pub enum CliError {
    /// Wrong invocation or unreadable input; exits 2.
    Usage(String),
    /// Failure while executing valid work; exits 1.
    Run(String),
}

#[derive(Parser, Debug)]
#[command(
    name = "ltmlab",
    version,
    about = "Train probabilistic time-series transformers and fit scaling laws to their runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Build a normalized, split corpus cache from a manifest
    Ingest(IngestArgs),
    /// Train one model from a run config
    Train(TrainArgs),
    /// Run every cell of an experiment plan
    Sweep(SweepArgs),
    /// Fit power laws to a campaign's run logs
    Fit(FitArgs),
    /// Sample forecasts from a checkpoint
    Forecast(ForecastArgs),
    /// Render a campaign's table of cells and scores
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
pub struct IngestArgs {
    /// Corpus manifest (TOML)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cache output path [default: <manifest stem>.corpus under
    /// LTMLAB_CACHE_DIR, else beside the manifest]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    /// Run config (TOML with corpus path, [model] and [train] tables)
    #[arg(long)]
    pub config: PathBuf,
    /// Print each evaluation line as it is logged
    #[arg(long)]
    pub verbose: bool,
}

#[derive(clap::Args, Debug)]
pub struct SweepArgs {
    /// Experiment plan (TOML)
    #[arg(long)]
    pub plan: PathBuf,
    /// Worker processes to run at a time; 1 runs cells in this process
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Print each evaluation line of each run (in-process runs only)
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    /// Model size in trainable parameters
    Params,
    /// Cumulative training compute, minimized over the frontier
    Compute,
    /// Training points seen by the run
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Mse,
    Crps,
    Loglik,
}

#[derive(clap::Args, Debug)]
pub struct FitArgs {
    /// Campaign directory written by `sweep`
    #[arg(long)]
    pub campaign: PathBuf,
    /// Scaling axis
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Test metric the losses come from
    #[arg(long, value_enum, default_value_t = MetricArg::Loglik)]
    pub metric: MetricArg,
}

#[derive(clap::Args, Debug)]
pub struct ForecastArgs {
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with a `value` column (optional `timestamp` for ordering)
    #[arg(long)]
    pub series: PathBuf,
    /// Steps to forecast past the context
    #[arg(long)]
    pub horizon: usize,
    /// Trajectories to sample
    #[arg(long, default_value_t = 100)]
    pub n_samples: usize,
    /// Context length; the first N points condition the forecast and the
    /// rest are held-out truth [default: the whole series]
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip context normalization (series already in model units)
    #[arg(long)]
    pub raw: bool,
    /// Output stem; writes <stem>.csv and <stem>.svg
    #[arg(long, default_value = "forecast")]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct ReportArgs {
    /// Campaign directory written by `sweep`
    #[arg(long)]
    pub campaign: PathBuf,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 on bad usage and 0 for --help/--version
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Cmd::Ingest(args) => ingest::cmd_ingest(args),
        Cmd::Train(args) => run_cmd::cmd_train(args),
        Cmd::Sweep(args) => sweep_cmd::cmd_sweep(args),
        Cmd::Fit(args) => fit_cmd::cmd_fit(args),
        Cmd::Forecast(args) => forecast_cmd::cmd_forecast(args),
        Cmd::Report(args) => fit_cmd::cmd_report(args),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
