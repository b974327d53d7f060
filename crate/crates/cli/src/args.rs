use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "dqnpm",
    version,
    about = "Deep Q-network portfolio manager: data, training, backtests and baselines"
)]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download one-minute klines from the exchange REST API.
    Fetch(FetchArgs),
    /// Select, align and pad asset series; with --check only validate.
    Preprocess(PreprocessArgs),
    /// Train the agent and write a model checkpoint.
    Train(TrainArgs),
    /// Run a trained model greedily over a period.
    Backtest(BacktestArgs),
    /// Run a classical online-portfolio baseline.
    Baseline(BaselineArgs),
    /// Average train/backtest profits over a window x temperature grid.
    Gridsearch(GridArgs),
    /// Summarize a report; optionally export the curve with drawdowns.
    Report(ReportArgs),
    /// Write a synthetic market as kline CSV files.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PeriodArgs {
    /// Period start (inclusive): YYYY-MM-DD, RFC 3339 or epoch ms.
    #[arg(long)]
    pub start: Option<String>,
    /// Period end (exclusive).
    #[arg(long)]
    pub end: Option<String>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Comma-separated symbols, e.g. BTCUSDT,ETHUSDT.
    #[arg(long, value_delimiter = ',', required = true)]
    pub symbols: Vec<String>,
    #[arg(long)]
    pub start: String,
    #[arg(long)]
    pub end: String,
    #[arg(long, default_value = "https://api.binance.com/api/v3")]
    pub endpoint: String,
    #[arg(long, default_value_t = 1000)]
    pub page_limit: usize,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Directory of kline CSV files.
    #[arg(long)]
    pub data: PathBuf,
    /// Keep the highest-volume assets.
    #[arg(long, default_value_t = 8)]
    pub assets: usize,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[command(flatten)]
    pub period: PeriodArgs,
    /// Validate and summarize without writing files.
    #[arg(long)]
    pub check: bool,
    #[arg(long, required_unless_present = "check")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// key = value configuration file; unset keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub period: PeriodArgs,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// The first decision is taken at --start; earlier minutes only supply history.
    #[command(flatten)]
    pub period: PeriodArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ubah,
    Ucrp,
    Eg,
    Pamr,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub assets: usize,
    #[command(flatten)]
    pub period: PeriodArgs,
    /// Exponential-gradient learning rate.
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    /// Mean-reversion sensitivity.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Treat the base currency as an investable asset.
    #[arg(long)]
    pub include_cash: bool,
    #[arg(long, default_value_t = 1000.0)]
    pub initial_amount: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub windows: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub temps: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Worker threads for the grid cells.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Start of the held-out period; defaults to 80% into the data.
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub period: PeriodArgs,
    /// Base seed for the per-run seeds; defaults to the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON written by `backtest` or `baseline`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write step, timestamp, total value and drawdown as CSV.
    #[arg(long)]
    pub emit_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Two assets alternating +5% / -4% in antiphase.
    Alternating,
    /// Seeded geometric random walks.
    RandomWalk,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub minutes: usize,
    /// Asset count (random walk only).
    #[arg(long, default_value_t = 3)]
    pub assets: usize,
    /// Per-minute log-return half-width (random walk only).
    #[arg(long, default_value_t = 0.002)]
    pub volatility: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// First minute; defaults to 2021-01-01.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}
