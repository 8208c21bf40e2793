//! Single-instrument trading environment with integer share quantities,
//! proportional trading costs and the cash constraints that keep every
//! short position repayable under a bounded daily price move.

mod bounds;
mod step;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{FeatureConfig, FeatureWindow};

pub use bounds::{
    action_lower_bound, action_upper_bound, cash_after_trade, feasible_range, lower_bound_delta,
    q_long, q_short, repayable,
};
pub use step::{step, StepOutcome};
pub use trajectory::{
    run_trajectory, Decision, Experience, Policy, RunOutput, TradingEnv, Trajectory, TrajectoryRow,
    TrajectoryStep,
};

/// Discrete action, also the resulting trading position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Short = 0,
    Long = 1,
}

/// A position is named by the action that established it.
pub type Position = Action;

impl Action {
    pub const ALL: [Action; 2] = [Action::Short, Action::Long];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Action::Short),
            1 => Some(Action::Long),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Action::Short => Action::Long,
            Action::Long => Action::Short,
        }
    }

    /// +1 for long, -1 for short.
    pub fn code(self) -> f64 {
        match self {
            Action::Short => -1.0,
            Action::Long => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Short => "short",
            Action::Long => "long",
        }
    }
}

impl std::str::FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(Action::Short),
            "long" => Ok(Action::Long),
            other => Err(Error::Config(format!("unknown action {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Fraction of traded money lost per trade.
    pub cost_rate: f64,
    /// Assumed maximum relative daily price move.
    pub epsilon_bound: f64,
    pub initial_cash: f64,
    pub features: FeatureConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            cost_rate: 0.001,
            epsilon_bound: 0.1,
            initial_cash: 100_000.0,
            features: FeatureConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.cost_rate >= 0.0 && self.cost_rate < 1.0) {
            problems.push(format!("cost rate {} not in [0, 1)", self.cost_rate));
        }
        if !(self.epsilon_bound > 0.0 && self.epsilon_bound.is_finite()) {
            problems.push(format!(
                "epsilon bound {} must be positive",
                self.epsilon_bound
            ));
        }
        if !(self.initial_cash > 0.0 && self.initial_cash.is_finite()) {
            problems.push(format!(
                "initial cash {} must be positive",
                self.initial_cash
            ));
        }
        if self.features.filter_window == 0 {
            problems.push("filter window must be >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// `(1 + epsilon)(1 + C)`: worst-case cost of buying back one share per
    /// unit of current price.
    pub(crate) fn buyback_factor(&self) -> f64 {
        (1.0 + self.epsilon_bound) * (1.0 + self.cost_rate)
    }
}

/// Cash, signed share count and position of the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub cash: f64,
    pub shares: i64,
    pub position: Position,
    /// Action of the previous step; `None` before the first decision.
    pub last_action: Option<Action>,
    /// Portfolio value at the most recent mark price.
    pub value: f64,
}

impl AgentState {
    /// All cash, no shares; the first action establishes the position.
    pub fn initial(cash: f64) -> Self {
        Self {
            cash,
            shares: 0,
            position: Action::Long,
            last_action: None,
            value: cash,
        }
    }

    pub fn value_at(&self, price: f64) -> f64 {
        self.cash + self.shares as f64 * price
    }
}

/// Reduced observation: a window of processed bars plus the current position.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub window: FeatureWindow,
    pub position: Position,
}

impl Observation {
    /// Flattened network input; the position is the last entry.
    pub fn to_input(&self) -> Vec<f64> {
        let mut v = self.window.flatten();
        v.push(self.position.code());
        v
    }
}

pub fn build_observation(
    window: &FeatureWindow,
    state: &AgentState,
    config: &FeatureConfig,
) -> Result<Observation> {
    if window.rows.len() != config.tau + 1 {
        return Err(Error::DimensionMismatch {
            expected: config.tau + 1,
            actual: window.rows.len(),
        });
    }
    Ok(Observation {
        window: window.clone(),
        position: state.position,
    })
}
