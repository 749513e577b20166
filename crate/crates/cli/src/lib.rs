//! `inertia` command-line runner.
//!
//! Exit codes: 0 success, 1 oracle mismatch, 2 input error, 3 model error,
//! 4 infeasible plan.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use inertia_core::estimator::SolveMode;

pub use config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_MISMATCH: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_MODEL: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }

    pub fn model(message: impl Into<String>) -> Self {
        CliError { code: EXIT_MODEL, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "inertia", version, about = "Per-plant inertia reconstruction, forecasting and action planning")]
pub struct Cli {
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit per-plant inertia from positions and aggregate inertia.
    Fit(FitArgs),
    /// Forecast market inertia from a fitted model and planned positions.
    Predict(PredictArgs),
    /// Choose the cheapest actions that lift inertia to the trigger.
    Anticipate(AnticipateArgs),
    /// Write a synthetic fixture set with known inertia.
    Synth(SynthArgs),
    /// Compare the exact solvers with brute-force enumeration.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Directory holding the standard input file names.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub positions: Option<PathBuf>,
    #[arg(long)]
    pub market: Option<PathBuf>,
    #[arg(long)]
    pub outturn: Option<PathBuf>,
    #[arg(long)]
    pub demand: Option<PathBuf>,
    #[arg(long)]
    pub actions: Option<PathBuf>,
    #[arg(long)]
    pub plants: Option<PathBuf>,
    /// First trading date to use (inclusive).
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Last trading date to use (inclusive).
    #[arg(long)]
    pub to: Option<NaiveDate>,
    #[arg(long)]
    pub on_threshold_mw: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fixed penalty per nonzero plant; skips the grid search.
    #[arg(long, conflicts_with = "lambda_grid")]
    pub lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub mode: Option<SolveMode>,
    /// Schedule agreement above which same-fuel plants share one value.
    #[arg(long)]
    pub agreement: Option<f64>,
    /// Fit every plant separately.
    #[arg(long)]
    pub no_group: bool,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub trigger_gvas: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnticipateArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    /// Forecast inertia without any action, in GVAs.
    #[arg(long)]
    pub baseline: f64,
    #[arg(long)]
    pub trigger_gvas: Option<f64>,
    #[arg(long)]
    pub lead_minutes: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_plants: Option<usize>,
    #[arg(long)]
    pub n_periods: Option<usize>,
    #[arg(long)]
    pub zero_fraction: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub w_dem: Option<f64>,
    #[arg(long)]
    pub duty_cycle: Option<f64>,
    #[arg(long)]
    pub tso_action_rate: Option<f64>,
    #[arg(long)]
    pub colinear_pair: bool,
    #[arg(long)]
    pub start_date: Option<NaiveDate>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
}

impl DataArgs {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            data: self.data.clone(),
            positions: self.positions.clone(),
            market: self.market.clone(),
            outturn: self.outturn.clone(),
            demand: self.demand.clone(),
            actions: self.actions.clone(),
            plants: self.plants.clone(),
            from: self.from,
            to: self.to,
            on_threshold_mw: self.on_threshold_mw,
            ..RunConfig::default()
        }
    }
}

impl Command {
    /// The settings this command's flags pin down.
    fn flags(&self) -> RunConfig {
        match self {
            Command::Fit(a) => RunConfig {
                lambda: a.lambda,
                lambda_grid: a.lambda_grid.clone(),
                mode: a.mode.map(|m| m.to_string()),
                agreement: a.agreement,
                group: a.no_group.then_some(false),
                validation_fraction: a.validation_fraction,
                out: a.out.clone(),
                ..a.data.to_config()
            },
            Command::Predict(a) => RunConfig { trigger_gvas: a.trigger_gvas, out: a.out.clone(), ..a.data.to_config() },
            Command::Anticipate(a) => RunConfig {
                trigger_gvas: a.trigger_gvas,
                lead_minutes: a.lead_minutes,
                out: a.out.clone(),
                ..RunConfig::default()
            },
            Command::Synth(a) => RunConfig { seed: a.seed, out: a.out.clone(), ..RunConfig::default() },
            Command::OracleCheck(a) => RunConfig { seed: a.seed, ..RunConfig::default() },
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.overlay(cli.command.flags());
    cfg.validate()?;
    match &cli.command {
        Command::Fit(_) => commands::cmd_fit(&cfg),
        Command::Predict(a) => commands::cmd_predict(&cfg, &a.model),
        Command::Anticipate(a) => commands::cmd_anticipate(&cfg, &a.candidates, a.baseline),
        Command::Synth(a) => commands::cmd_synth(&cfg, a),
        Command::OracleCheck(a) => commands::cmd_oracle_check(&cfg, a.instances),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
