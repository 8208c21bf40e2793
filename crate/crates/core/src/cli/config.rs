use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::benchmarks::{StrategyKind, StrategySpec};
use crate::error::{Error, Result};
use crate::market_data::DataSource;

pub const DATA_DIR_ENV: &str = "TDQN_DATA_DIR";

/// A learned agent or one of the benchmark strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Tdqn,
    Benchmark(StrategyKind),
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tdqn" => Ok(Strategy::Tdqn),
            other => Ok(Strategy::Benchmark(other.parse()?)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Tdqn => "tdqn",
            Strategy::Benchmark(k) => k.as_str(),
        }
    }
}

/// Fully merged run settings. Precedence: built-in defaults, then the
/// config file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ticker: Option<String>,
    /// File path template with `{ticker}`, an `http(s)://` URL template, or
    /// `synthetic:<kind>`. Defaults to `<data_dir>/{ticker}.csv`.
    pub source: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Last date of the training set.
    pub train_end: Option<NaiveDate>,
    pub validation_fraction: f64,
    pub http_timeout_secs: u64,
    pub http_retries: u32,
    pub seed: u64,
    pub runs: usize,
    pub threads: usize,
    pub output: Option<PathBuf>,
    pub strategy: String,
    pub strategies: Vec<String>,
    pub short_window: usize,
    pub long_window: usize,
    pub model: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub testbench: Option<PathBuf>,
    pub costs: Vec<f64>,
    pub agent: AgentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ticker: None,
            source: None,
            data_dir: None,
            start: None,
            end: None,
            train_end: None,
            validation_fraction: 0.2,
            http_timeout_secs: 30,
            http_retries: 3,
            seed: 0,
            runs: 50,
            threads: 1,
            output: None,
            strategy: "tdqn".into(),
            strategies: vec![
                "tdqn".into(),
                "buy-hold".into(),
                "sell-hold".into(),
                "trend-following".into(),
                "mean-reversion".into(),
            ],
            short_window: 5,
            long_window: 20,
            model: None,
            resume: None,
            testbench: None,
            costs: vec![0.0, 0.001, 0.002],
            agent: AgentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn data_source(&self) -> Result<DataSource> {
        let spec = match &self.source {
            Some(s) => s.clone(),
            None => {
                let dir = self
                    .data_dir
                    .clone()
                    .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                    .unwrap_or_else(|| PathBuf::from("data"));
                dir.join("{ticker}.csv").to_string_lossy().into_owned()
            }
        };
        DataSource::parse(&spec, self.http_timeout_secs, self.http_retries)
    }

    pub fn range(&self) -> Option<(NaiveDate, NaiveDate)> {
        match (self.start, self.end) {
            (None, None) => None,
            (s, e) => Some((s.unwrap_or(NaiveDate::MIN), e.unwrap_or(NaiveDate::MAX))),
        }
    }

    pub fn strategy_spec(&self, kind: StrategyKind) -> StrategySpec {
        StrategySpec {
            kind,
            short_window: self.short_window,
            long_window: self.long_window,
        }
    }

    pub fn output_dir(&self, command: &str) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(command))
    }

    /// Checks everything `command` needs, reporting every problem at once.
    pub fn validate_for(&self, command: &str) -> Result<()> {
        let mut problems = Vec::new();
        let needs_ticker = command != "testbench";
        let needs_split = command != "fetch";
        if needs_ticker && self.ticker.as_deref().is_none_or(str::is_empty) {
            problems.push("missing --ticker".to_string());
        }
        if needs_split {
            if self.train_end.is_none() {
                problems.push("missing --train-end".to_string());
            }
            if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
                problems.push(format!(
                    "validation fraction {} not in (0, 1)",
                    self.validation_fraction
                ));
            }
            if let Err(e) = self.agent.validate() {
                problems.push(e.to_string());
            }
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s > e {
                problems.push(format!("start {s} is after end {e}"));
            }
        }
        if let Err(e) = self.data_source() {
            problems.push(e.to_string());
        }
        if self.threads == 0 {
            problems.push("threads must be >= 1".into());
        }
        match command {
            "backtest" => match Strategy::parse(&self.strategy) {
                Ok(Strategy::Tdqn) if self.model.is_none() => {
                    problems.push("backtesting the learned agent needs --model".into())
                }
                Ok(Strategy::Benchmark(k)) => {
                    if let Err(e) = self.strategy_spec(k).validate() {
                        problems.push(e.to_string());
                    }
                }
                Ok(Strategy::Tdqn) => {}
                Err(e) => problems.push(e.to_string()),
            },
            "expected" if self.runs < 2 => {
                problems.push(format!("--runs must be >= 2, got {}", self.runs))
            }
            "testbench" => {
                if self.strategies.is_empty() {
                    problems.push("no strategies selected".into());
                }
                for s in &self.strategies {
                    match Strategy::parse(s) {
                        Ok(Strategy::Benchmark(k)) => {
                            if let Err(e) = self.strategy_spec(k).validate() {
                                problems.push(e.to_string());
                            }
                        }
                        Ok(Strategy::Tdqn) => {}
                        Err(e) => problems.push(e.to_string()),
                    }
                }
            }
            "cost-sweep" => {
                if self.costs.is_empty() {
                    problems.push("no trading costs to sweep".into());
                }
                for c in &self.costs {
                    if !(*c >= 0.0 && *c < 1.0) {
                        problems.push(format!("cost rate {c} not in [0, 1)"));
                    }
                }
            }
            _ => {}
        }
        problems.dedup();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
