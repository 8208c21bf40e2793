//! Command-line interface: data ingestion, training, backtesting,
//! expected-performance studies, testbench tables and cost sweeps.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::error::Result;

pub use commands::{Manifest, SeriesInfo};
pub use config::{RunConfig, Strategy, DATA_DIR_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "tdqn",
    version,
    about = "Deep Q-learning for algorithmic trading"
)]
pub struct Cli {
    /// More output (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download or copy daily bars into the output directory.
    Fetch(CommonArgs),
    /// Train one agent.
    Train(TrainArgs),
    /// Evaluate a trained model or a benchmark strategy on the test set.
    Backtest(BacktestArgs),
    /// Train several agents and aggregate their Sharpe-ratio curves.
    Expected(ExpectedArgs),
    /// Every instrument of a testbench against every strategy.
    Testbench(TestbenchArgs),
    /// Train and backtest across trading-cost rates.
    CostSweep(CostSweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fetch(_) => "fetch",
            Command::Train(_) => "train",
            Command::Backtest(_) => "backtest",
            Command::Expected(_) => "expected",
            Command::Testbench(_) => "testbench",
            Command::CostSweep(_) => "cost-sweep",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ticker: Option<String>,
    /// File template with {ticker}, http(s) URL template, or synthetic:<kind>.
    #[arg(long)]
    pub source: Option<String>,
    /// Directory of <ticker>.csv files when no source is given
    /// [default: $TDQN_DATA_DIR, else ./data].
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub end: Option<NaiveDate>,
    #[arg(long)]
    pub train_end: Option<NaiveDate>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub cost_rate: Option<f64>,
    #[arg(long)]
    pub epsilon_bound: Option<f64>,
    #[arg(long)]
    pub initial_cash: Option<f64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Hidden layer widths, e.g. 512,512,512.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Continue from a trainer checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// tdqn, buy-hold, sell-hold, trend-following or mean-reversion.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Trained model file (for --strategy tdqn).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub short_window: Option<usize>,
    #[arg(long)]
    pub long_window: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ExpectedArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TestbenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Testbench TOML file; the built-in 30-stock testbench otherwise.
    #[arg(long)]
    pub testbench: Option<PathBuf>,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Option<Vec<String>>,
    #[arg(long)]
    pub short_window: Option<usize>,
    #[arg(long)]
    pub long_window: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CostSweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated trading-cost rates.
    #[arg(long, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
}

fn apply_common(c: &mut RunConfig, a: &CommonArgs) {
    fn over<T: Clone>(flag: &Option<T>, field: &mut T) {
        if let Some(v) = flag {
            field.clone_from(v);
        }
    }
    fn over_opt<T: Clone>(flag: &Option<T>, field: &mut Option<T>) {
        if flag.is_some() {
            field.clone_from(flag);
        }
    }
    over_opt(&a.ticker, &mut c.ticker);
    over_opt(&a.source, &mut c.source);
    over_opt(&a.data_dir, &mut c.data_dir);
    over_opt(&a.start, &mut c.start);
    over_opt(&a.end, &mut c.end);
    over_opt(&a.train_end, &mut c.train_end);
    over_opt(&a.output, &mut c.output);
    over(&a.validation_fraction, &mut c.validation_fraction);
    over(&a.cost_rate, &mut c.agent.env.cost_rate);
    over(&a.epsilon_bound, &mut c.agent.env.epsilon_bound);
    over(&a.initial_cash, &mut c.agent.env.initial_cash);
    over(&a.episodes, &mut c.agent.hyper.episodes);
    over(&a.hidden, &mut c.agent.network.hidden);
    over(&a.seed, &mut c.seed);
    over(&a.threads, &mut c.threads);
}

/// Merges defaults, the config file and the flags of `command`.
pub fn resolve_config(command: &Command) -> Result<RunConfig> {
    let common = match command {
        Command::Fetch(a) => a,
        Command::Train(a) => &a.common,
        Command::Backtest(a) => &a.common,
        Command::Expected(a) => &a.common,
        Command::Testbench(a) => &a.common,
        Command::CostSweep(a) => &a.common,
    };
    let mut c = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_common(&mut c, common);
    match command {
        Command::Train(a) => {
            if a.resume.is_some() {
                c.resume.clone_from(&a.resume);
            }
        }
        Command::Backtest(a) => {
            if let Some(s) = &a.strategy {
                c.strategy.clone_from(s);
            }
            if a.model.is_some() {
                c.model.clone_from(&a.model);
            }
            c.short_window = a.short_window.unwrap_or(c.short_window);
            c.long_window = a.long_window.unwrap_or(c.long_window);
        }
        Command::Expected(a) => c.runs = a.runs.unwrap_or(c.runs),
        Command::Testbench(a) => {
            if a.testbench.is_some() {
                c.testbench.clone_from(&a.testbench);
            }
            if let Some(s) = &a.strategy {
                c.strategies.clone_from(s);
            }
            c.short_window = a.short_window.unwrap_or(c.short_window);
            c.long_window = a.long_window.unwrap_or(c.long_window);
        }
        Command::CostSweep(a) => {
            if let Some(costs) = &a.costs {
                c.costs.clone_from(costs);
            }
        }
        Command::Fetch(_) => {}
    }
    c.validate_for(command.name())?;
    Ok(c)
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Info,
            1 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

/// Executes a parsed command line; returns the manifest of the run.
pub fn execute(cli: &Cli) -> Result<Manifest> {
    let config = resolve_config(&cli.command)?;
    commands::dispatch(cli.command.name(), &config)
}

/// Entry point: parses `args`, runs the command, maps failures to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    init_logging(&cli);
    match execute(&cli) {
        Ok(m) => {
            log::info!(
                "wrote {} files to {}",
                m.outputs.len(),
                m.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
