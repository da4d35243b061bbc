mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use saferoute::evaluate::ModelKind;

use config::{RunConfig, CONFIG_ENV};
use failure::{Failure, EXIT_USAGE};

/// Safety-weighted subway routing: ingest incidents, fit forecasters,
/// compare them and route between stations.
#[derive(Debug, Parser)]
#[command(name = "saferoute", version)]
struct Cli {
    /// Flat TOML config; flags override its keys.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count incidents around each station into time series.
    Ingest(IngestArgs),
    /// Fit one model per station and derive safety coefficients.
    Fit(FitArgs),
    /// Score all models on the held-out buckets by RMSE.
    Evaluate(EvaluateArgs),
    /// Find a route between two stations.
    Route(RouteArgs),
    /// Time all three engines on the same query and check they agree.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Station connectivity CSV (default: bundled fixture).
    #[arg(long)]
    pub stations: Option<PathBuf>,
    /// Incident CSV (default: bundled fixture).
    #[arg(long)]
    pub incidents: Option<PathBuf>,
    /// Radius around each station in km [default: 8].
    #[arg(long)]
    pub radius_km: Option<f64>,
    /// daily, weekly or monthly [default: monthly].
    #[arg(long)]
    pub bucket: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RangeArgs {
    /// First day of the range [default: 2018-01-01].
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Day after the range, exclusive [default: 2020-01-01].
    #[arg(long)]
    pub end: Option<NaiveDate>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Ridge and lasso penalty [default: 0.1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Recurrent training epochs [default: 3000].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Recurrent hidden units [default: 8].
    #[arg(long)]
    pub hidden_size: Option<usize>,
    /// Recurrent input window [default: 4].
    #[arg(long)]
    pub window: Option<usize>,
    /// Recurrent learning rate [default: 0.05].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Seed for weight init and Q-learning [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// First day of the range [default: 2018-01-01].
    #[arg(long = "from", alias = "start")]
    pub start: Option<NaiveDate>,
    /// Day after the range, exclusive [default: 2020-01-01].
    #[arg(long = "to", alias = "end")]
    pub end: Option<NaiveDate>,
    /// Write the series JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// poisson, ols, ridge, lasso, lstm or gru.
    #[arg(long, value_parser = parse_model)]
    pub model: ModelKind,
    /// Series JSON from `ingest` (default: ingest in-process).
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub range: RangeArgs,
    #[command(flatten)]
    pub model_args: ModelArgs,
    /// Write the fit JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Series JSON from `ingest` (default: ingest in-process).
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Comma-separated subset of models [default: all six].
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    pub models: Vec<ModelKind>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Run station × model fits one at a time.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub range: RangeArgs,
    #[command(flatten)]
    pub model_args: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub range: RangeArgs,
    #[command(flatten)]
    pub model_args: ModelArgs,
    /// Safety coefficients from a `fit` output file.
    #[arg(long, conflicts_with_all = ["uniform_safety", "edges"])]
    pub safety: Option<PathBuf>,
    /// Route on travel time alone.
    #[arg(long, conflicts_with = "edges")]
    pub uniform_safety: bool,
    /// Model used to compute safety in-process [default: poisson].
    #[arg(long, value_parser = parse_model)]
    pub safety_model: Option<ModelKind>,
    /// Which endpoint's safety weights a segment: source, destination or mean [default: destination].
    #[arg(long)]
    pub safety_mode: Option<String>,
    /// Raw weighted edge list (`from,to,weight`) instead of a station file.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Q-learning episodes [default: 10000].
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    /// dijkstra, bellman-ford or q-learning [default: dijkstra].
    #[arg(long)]
    pub engine: Option<String>,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = saferoute::fixtures::CORRIDOR_SOURCE)]
    pub from: String,
    #[arg(long, default_value = saferoute::fixtures::CORRIDOR_TARGET)]
    pub to: String,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeat: u32,
    #[command(flatten)]
    pub graph: GraphArgs,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => commands::ingest(&config, a),
        Command::Fit(a) => commands::fit(&config, a),
        Command::Evaluate(a) => commands::evaluate(&config, a),
        Command::Route(a) => commands::route(&config, a),
        Command::Bench(a) => commands::bench(&config, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
