//! `steinselect` command-line tool.
//!
//! Exit codes: 0 success, 2 validation, 3 numerical failure, 4 iteration
//! limit. Settings resolve as flags, then the `--config` TOML file, then
//! built-in defaults.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use steinselect::tuning::K1Rule;
use steinselect::ErrorKind;

use config::{parse_usize_list, Auto, CovSetting};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Core(steinselect::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::IterationLimit => 4,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<steinselect::Error> for CliError {
    fn from(e: steinselect::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

/// Comma-separated integers or an inclusive range `a..b`.
#[derive(Debug, Clone)]
pub struct UsizeList(pub Vec<usize>);

impl FromStr for UsizeList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_usize_list(s).map(UsizeList)
    }
}

/// Comma-separated reals.
#[derive(Debug, Clone)]
pub struct F64List(pub Vec<f64>);

impl FromStr for F64List {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse().map_err(|e| format!("bad number {t:?}: {e}")))
            .collect::<Result<_, _>>()
            .map(F64List)
    }
}

/// Comma-separated words.
#[derive(Debug, Clone)]
pub struct WordList(pub Vec<String>);

impl FromStr for WordList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(WordList(
            s.split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect(),
        ))
    }
}

#[derive(Debug, Parser)]
#[command(name = "steinselect", version, about = "Feature selection from second-order Stein moments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "STEINSELECT_JOBS")]
    jobs: Option<usize>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select features from a CSV dataset.
    Select(SelectCmd),
    /// Screen a high-dimensional dataset, then select.
    Screen(ScreenCmd),
    /// Write a synthetic dataset and its ground truth.
    Simulate(SimulateCmd),
    /// Run replicated simulations over a grid and write summary CSV.
    Benchmark(BenchmarkCmd),
    /// Train a ReLU regressor on a selection.
    Refit(RefitCmd),
    /// Predict with a trained model.
    Predict(PredictCmd),
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// Number of eigenvectors kept, or `auto` for the eigengap ratio.
    #[arg(long)]
    pub k1: Option<Auto<usize>>,
    /// `ratio-minus-one` or `ratio`.
    #[arg(long)]
    pub k1_rule: Option<K1Rule>,
    /// Largest k considered by the eigengap ratio.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Number of features kept, or `auto` for BIC.
    #[arg(long)]
    pub s: Option<Auto<usize>>,
    /// Candidate sizes for BIC, e.g. `1..10`.
    #[arg(long)]
    pub s_grid: Option<UsizeList>,
    /// BIC penalty multiplier.
    #[arg(long)]
    pub bic_lambda: Option<f64>,
    /// Keep features whose column score is at least this.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// `sample`, `ledoit-wolf`, `auto` or `known:<path>`.
    #[arg(long)]
    pub cov: Option<CovSetting>,
    /// Subtract the response mean before forming the moment.
    #[arg(long)]
    pub center_response: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScreeningArgs {
    /// Fraction kept per round, or `auto`.
    #[arg(long)]
    pub zeta: Option<Auto<f64>>,
    /// Target dimension, or `auto`.
    #[arg(long)]
    pub p0: Option<Auto<usize>>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectCmd {
    pub data: PathBuf,
    /// Response column name.
    #[arg(long)]
    pub response: Option<String>,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long, default_value = "selection.json")]
    pub out: PathBuf,
    /// Also write the eigengap ratios as CSV.
    #[arg(long)]
    pub eigengap_csv: Option<PathBuf>,
    /// Also write the BIC table as CSV.
    #[arg(long)]
    pub bic_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreenCmd {
    #[command(flatten)]
    pub select: SelectCmd,
    #[command(flatten)]
    pub screening: ScreeningArgs,
    #[arg(long, default_value = "trace.json")]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Case number 1 to 5.
    #[arg(long)]
    pub case: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// `gaussian` or `t<dof>`.
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// `rows` or `columns`.
    #[arg(long)]
    pub weight_norm: Option<String>,
    #[arg(long, default_value = "data.csv")]
    pub out: PathBuf,
    #[arg(long, default_value = "truth.json")]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkCmd {
    #[arg(long)]
    pub cases: Option<UsizeList>,
    #[arg(long)]
    pub n: Option<UsizeList>,
    #[arg(long)]
    pub p: Option<UsizeList>,
    #[arg(long)]
    pub rho: Option<F64List>,
    #[arg(long)]
    pub design: Option<WordList>,
    /// `plain`, `screened` or both.
    #[arg(long)]
    pub methods: Option<WordList>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Held-out size for refit MSE (0 skips the refit).
    #[arg(long)]
    pub holdout_n: Option<usize>,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub screening: ScreeningArgs,
    #[arg(long, default_value = "summary.csv")]
    pub out: PathBuf,
    /// Also write every replication record as JSON.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefitCmd {
    pub data: PathBuf,
    pub selection: PathBuf,
    #[arg(long)]
    pub response: Option<String>,
    /// Hidden widths, e.g. `64,32`.
    #[arg(long)]
    pub hidden: Option<UsizeList>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// `sgd` or `adam`.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictCmd {
    pub model: PathBuf,
    pub data: PathBuf,
    /// Response column; when present the MSE is reported.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

/// Settings shared by every command.
pub struct Globals {
    pub seed: u64,
    pub config: config::RunConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = config::RunConfig::load(cli.config.as_deref())?;
    let jobs = cli
        .jobs
        .or(config.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError::Validation("jobs must be >= 1".into()));
    }
    let globals = Globals {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        config,
    };
    let command = cli.command;
    steinselect::parallel::with_jobs(jobs, move || match command {
        Command::Select(c) => commands::select(&c, &globals),
        Command::Screen(c) => commands::screen(&c, &globals),
        Command::Simulate(c) => commands::simulate(&c, &globals),
        Command::Benchmark(c) => commands::benchmark(&c, &globals),
        Command::Refit(c) => commands::refit(&c, &globals),
        Command::Predict(c) => commands::predict(&c, &globals),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
