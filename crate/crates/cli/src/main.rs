mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Why a command stopped; each maps to its own exit status.
#[derive(Debug)]
pub enum Failure {
    /// A construction or measurement broke its contract (exit 1).
    Contract(String),
    /// Bad flags, config or input files (exit 2).
    Usage(String),
    /// A construction would exceed a size cap (exit 3).
    SizeCap(String),
}

impl From<opscale::Error> for Failure {
    fn from(e: opscale::Error) -> Self {
        use opscale::Error as E;
        match e {
            E::SizeCap { .. } => Failure::SizeCap(e.to_string()),
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::Malformed(_) | E::Json(_) | E::Io(_) | E::Csv(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Contract(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "opscale", version, about = "Constructive ReLU approximators, DeepONet training and scaling-law sweeps")]
pub struct Cli {
    /// TOML config file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build approximators and check their error and size contracts.
    VerifyApprox(VerifyArgs),
    /// Build the explicit DeepONet for the configured problem and measure its sup error.
    BuildOperator(OperatorArgs),
    /// Sample a noisy operator dataset.
    GenData(DataArgs),
    /// Train a dense DeepONet by empirical risk minimization.
    Train(TrainArgs),
    /// Run a data or model scaling sweep.
    Sweep(SweepArgs),
    /// Print predicted rates, budgets and covering bounds.
    Bounds(BoundsArgs),
    /// Summarize the reports found in an output directory.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default)]
pub struct ProblemArgs {
    /// Number of span modes of the input class.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Coefficient bound of the input class.
    #[arg(long)]
    pub coef_bound: Option<f64>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// psi, product, function, functional or functional-lowdim.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "bU")]
    pub b_u: Option<usize>,
    #[arg(long)]
    pub functions: Option<usize>,
}

#[derive(Args, Debug)]
pub struct OperatorArgs {
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
    #[command(flatten)]
    pub problem: ProblemArgs,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output file (default: <out>/dataset.json).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub problem: ProblemArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset file written by gen-data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[command(flatten)]
    pub problem: ProblemArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// transport-data-scaling or transport-model-scaling.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated sweep sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Comma-separated replica seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub test_functions: Option<usize>,
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// general-approx, general-gen, lowdim-approx or lowdim-gen.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long = "bU")]
    pub b_u: Option<usize>,
    /// Comma-separated sizes to tabulate.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<f64>>,
    /// T1, T2, T8 or T10.
    #[arg(long)]
    pub theorem: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// n·n_y for the data-driven budgets.
    #[arg(long)]
    pub samples: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory to summarize (default: the output directory).
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let listing = config::field_listing();
    let cmd = Cli::command().after_long_help(listing.clone()).mut_subcommands(|s| s.after_long_help(listing.clone()));
    let cli = match cmd.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Contract(m) => (1, "contract violation", m),
                Failure::Usage(m) => (2, "usage error", m),
                Failure::SizeCap(m) => (3, "size cap refusal", m),
            };
            eprintln!("opscale: {kind}: {msg}");
            ExitCode::from(code)
        }
    }
}
