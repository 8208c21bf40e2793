//! Classical benchmark strategies acting through the same decision
//! interface as the learned agent.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::Evaluation;
use crate::env::{run_trajectory, Action, Decision, EnvConfig, Policy, TradingEnv};
use crate::error::{Error, Result};
use crate::market_data::{preprocess, Segment};
use crate::metrics::full_report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    BuyHold,
    SellHold,
    TrendFollowing,
    MeanReversion,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::BuyHold,
        StrategyKind::SellHold,
        StrategyKind::TrendFollowing,
        StrategyKind::MeanReversion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::BuyHold => "buy-hold",
            StrategyKind::SellHold => "sell-hold",
            StrategyKind::TrendFollowing => "trend-following",
            StrategyKind::MeanReversion => "mean-reversion",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "buy-hold" | "bh" => Ok(StrategyKind::BuyHold),
            "sell-hold" | "sh" => Ok(StrategyKind::SellHold),
            "trend-following" | "tf" => Ok(StrategyKind::TrendFollowing),
            "mean-reversion" | "mr" => Ok(StrategyKind::MeanReversion),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Moving-average windows in bars; unused by the passive strategies.
    pub short_window: usize,
    pub long_window: usize,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            short_window: 5,
            long_window: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.short_window == 0 || self.short_window >= self.long_window {
            return Err(Error::Config(format!(
                "moving-average windows must satisfy 1 <= short < long, got ({}, {})",
                self.short_window, self.long_window
            )));
        }
        Ok(())
    }

    pub fn policy(&self) -> Result<Box<dyn Policy + Send>> {
        self.validate()?;
        Ok(match self.kind {
            StrategyKind::BuyHold => Box::new(PassivePolicy(Action::Long)),
            StrategyKind::SellHold => Box::new(PassivePolicy(Action::Short)),
            StrategyKind::TrendFollowing | StrategyKind::MeanReversion => {
                Box::new(MovingAveragePolicy {
                    kind: self.kind,
                    short_window: self.short_window,
                    long_window: self.long_window,
                })
            }
        })
    }
}

/// Holds one position over the whole horizon.
#[derive(Debug, Clone, Copy)]
pub struct PassivePolicy(pub Action);

impl Policy for PassivePolicy {
    fn act(&mut self, _: &Decision<'_>) -> Action {
        self.0
    }
}

/// Moving-average crossover on the closes of the observation window.
#[derive(Debug, Clone, Copy)]
pub struct MovingAveragePolicy {
    pub kind: StrategyKind,
    pub short_window: usize,
    pub long_window: usize,
}

/// Trend-following signal on the trailing closes: Long when the short
/// average is above the long one. `None` without enough history.
pub fn trend_signal(closes: &[f64], short_window: usize, long_window: usize) -> Option<Action> {
    if closes.len() < long_window {
        return None;
    }
    let mean = |w: usize| closes[closes.len() - w..].iter().sum::<f64>() / w as f64;
    Some(if mean(short_window) > mean(long_window) {
        Action::Long
    } else {
        Action::Short
    })
}

impl Policy for MovingAveragePolicy {
    fn act(&mut self, decision: &Decision<'_>) -> Action {
        let closes: Vec<f64> = decision.bars.iter().map(|b| b.close).collect();
        match trend_signal(&closes, self.short_window, self.long_window) {
            None => decision.position,
            Some(a) if self.kind == StrategyKind::MeanReversion => a.opposite(),
            Some(a) => a,
        }
    }
}

/// Runs a benchmark strategy on `segment`, trading from the same bar as
/// the learned agent would.
pub fn run_benchmark(
    spec: &StrategySpec,
    segment: &Segment,
    config: &EnvConfig,
) -> Result<Evaluation> {
    let mut policy = spec.policy()?;
    let table = preprocess(&segment.series, config.features, None)?;
    let mut env = TradingEnv::new(
        Arc::new(segment.series.clone()),
        Arc::new(table),
        *config,
        segment.start,
    )?;
    let trajectory = run_trajectory(&mut env, policy.as_mut(), false)?.trajectory;
    let report = full_report(&trajectory.values(), &trajectory.positions())?;
    Ok(Evaluation { trajectory, report })
}
