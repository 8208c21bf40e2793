use std::io::{Read, Write};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::step::{step, StepOutcome};
use super::{Action, AgentState, EnvConfig, Observation, Position};
use crate::error::{Error, Result};
use crate::market_data::{preprocess, FeatureTable, OhlcvBar, OhlcvSeries};

/// What a policy sees at a decision bar.
pub struct Decision<'a> {
    /// Bar index in the underlying series.
    pub t: usize,
    /// Raw bars of the observation window, ending at `t`.
    pub bars: &'a [OhlcvBar],
    pub features: &'a FeatureTable,
    pub position: Position,
}

impl Decision<'_> {
    pub fn observation(&self) -> Observation {
        Observation {
            window: self
                .features
                .window(self.t)
                .expect("decisions start after warm-up"),
            position: self.position,
        }
    }

    pub fn write_input(&self, out: &mut [f64]) -> Result<()> {
        self.features.write_input(self.t, self.position.code(), out)
    }
}

pub trait Policy {
    fn act(&mut self, decision: &Decision<'_>) -> Action;
}

impl<F: FnMut(&Decision<'_>) -> Action> Policy for F {
    fn act(&mut self, decision: &Decision<'_>) -> Action {
        self(decision)
    }
}

/// One pass over a series from bar `start` to the last bar. Cloning yields
/// an independent copy sharing only the immutable market data.
#[derive(Debug, Clone)]
pub struct TradingEnv {
    series: Arc<OhlcvSeries>,
    features: Arc<FeatureTable>,
    config: EnvConfig,
    start: usize,
    t: usize,
    state: AgentState,
    initial: AgentState,
    breaches: usize,
}

impl TradingEnv {
    /// Trading begins at `start`, or at the end of the warm-up if later.
    pub fn new(
        series: Arc<OhlcvSeries>,
        features: Arc<FeatureTable>,
        config: EnvConfig,
        start: usize,
    ) -> Result<Self> {
        Self::with_state(
            series,
            features,
            config,
            start,
            AgentState::initial(config.initial_cash),
        )
    }

    pub fn with_state(
        series: Arc<OhlcvSeries>,
        features: Arc<FeatureTable>,
        config: EnvConfig,
        start: usize,
        initial: AgentState,
    ) -> Result<Self> {
        if features.series_len() != series.len() {
            return Err(Error::DimensionMismatch {
                expected: series.len(),
                actual: features.series_len(),
            });
        }
        let start = start.max(features.first_index());
        if start + 1 >= series.len() {
            return Err(Error::SeriesTooShort {
                needed: start + 2,
                actual: series.len(),
            });
        }
        Ok(Self {
            series,
            features,
            config,
            start,
            t: start,
            state: initial,
            initial,
            breaches: 0,
        })
    }

    /// Environment over a whole series, normalized with its own statistics.
    pub fn from_series(series: &OhlcvSeries, config: EnvConfig) -> Result<Self> {
        let table = preprocess(series, config.features, None)?;
        Self::new(Arc::new(series.clone()), Arc::new(table), config, 0)
    }

    pub fn reset(&mut self) {
        self.t = self.start;
        self.state = self.initial;
        self.breaches = 0;
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn series(&self) -> &Arc<OhlcvSeries> {
        &self.series
    }

    pub fn features(&self) -> &Arc<FeatureTable> {
        &self.features
    }

    /// Number of realized moves beyond the epsilon bound so far.
    pub fn breaches(&self) -> usize {
        self.breaches
    }

    /// No further step: the current bar is the last one.
    pub fn done(&self) -> bool {
        self.t + 1 >= self.series.len()
    }

    /// Steps remaining from the current bar.
    pub fn remaining(&self) -> usize {
        self.series.len() - 1 - self.t
    }

    pub fn decision(&self) -> Decision<'_> {
        let tau = self.features.config().tau;
        Decision {
            t: self.t,
            bars: &self.series.bars()[self.t - tau..=self.t],
            features: &self.features,
            position: self.state.position,
        }
    }

    pub fn step(&mut self, action: Action) -> Result<TrajectoryStep> {
        if self.done() {
            return Err(Error::SeriesTooShort {
                needed: self.t + 2,
                actual: self.series.len(),
            });
        }
        let bars = self.series.bars();
        let (now, next) = (bars[self.t], bars[self.t + 1]);
        let before = self.state;
        let out: StepOutcome = step(&before, action, now.close, next.close, &self.config)?;
        if out.move_breach {
            self.breaches += 1;
            log::debug!(
                "{}: move beyond epsilon bound on {}",
                self.series.instrument,
                next.date
            );
        }
        let record = TrajectoryStep {
            t: self.t,
            date: now.date,
            price: now.close,
            action,
            quantity: out.quantity,
            before,
            after: out.state,
            value_before: out.value_before,
            reward: out.reward,
            terminal: self.t + 2 >= bars.len(),
        };
        self.state = out.state;
        self.t += 1;
        Ok(record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub t: usize,
    pub date: NaiveDate,
    pub price: f64,
    pub action: Action,
    pub quantity: i64,
    pub before: AgentState,
    pub after: AgentState,
    /// Pre-trade portfolio value at `price`.
    pub value_before: f64,
    pub reward: f64,
    /// The next bar is the last one of the series.
    pub terminal: bool,
}

impl TrajectoryStep {
    /// Compact replay record of this transition.
    pub fn experience(&self, variant: u32) -> Experience {
        Experience {
            variant,
            t: self.t as u32,
            position: self.before.position,
            action: self.action,
            reward: self.reward,
            terminal: self.terminal,
        }
    }
}

/// A transition `(o_t, a_t, r_t, o_{t+1})` stored by reference: observations
/// are rebuilt from the feature table of series `variant`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub variant: u32,
    pub t: u32,
    /// Position in `o_t`.
    pub position: Position,
    pub action: Action,
    pub reward: f64,
    pub terminal: bool,
}

impl Experience {
    pub fn observation(&self, table: &FeatureTable) -> Observation {
        Observation {
            window: table.window(self.t as usize).expect("stored after warm-up"),
            position: self.position,
        }
    }

    /// `o_{t+1}`: the next window, in the position the action established.
    pub fn next_observation(&self, table: &FeatureTable) -> Observation {
        Observation {
            window: table.window(self.t as usize + 1).expect("next bar exists"),
            position: self.action,
        }
    }
}

/// Ordered record of one pass of a policy over a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instrument: String,
    pub steps: Vec<TrajectoryStep>,
    pub final_date: NaiveDate,
    pub final_price: f64,
    pub breaches: usize,
}

impl Trajectory {
    /// Portfolio values at each decision bar plus the final bar.
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.steps.iter().map(|s| s.value_before).collect();
        if let Some(last) = self.steps.last() {
            v.push(last.after.value);
        }
        v
    }

    /// Position held over each step.
    pub fn positions(&self) -> Vec<Position> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn position_changes(&self) -> usize {
        self.steps
            .windows(2)
            .filter(|w| w[0].action != w[1].action)
            .count()
    }

    pub fn rows(&self) -> Vec<TrajectoryRow> {
        let mut rows: Vec<TrajectoryRow> = self
            .steps
            .iter()
            .map(|s| TrajectoryRow {
                date: s.date,
                price: s.price,
                action: Some(s.action),
                quantity: s.quantity,
                cash: s.before.cash,
                shares: s.before.shares,
                value: s.value_before,
                reward: s.reward,
            })
            .collect();
        if let Some(last) = self.steps.last() {
            rows.push(TrajectoryRow {
                date: self.final_date,
                price: self.final_price,
                action: None,
                quantity: 0,
                cash: last.after.cash,
                shares: last.after.shares,
                value: last.after.value,
                reward: 0.0,
            });
        }
        rows
    }

    /// One row per bar: pre-trade state, the decision taken and its reward.
    /// The final bar carries action `none`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in self.rows() {
            wtr.serialize(row)?;
        }
        wtr.flush().map_err(|e| Error::io("<trajectory csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryRow>> {
        let mut rdr = csv::Reader::from_reader(reader);
        rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub date: NaiveDate,
    pub price: f64,
    #[serde(with = "action_column")]
    pub action: Option<Action>,
    pub quantity: i64,
    pub cash: f64,
    pub shares: i64,
    pub value: f64,
    pub reward: f64,
}

impl TrajectoryRow {
    /// Values and positions as consumed by the metric suite.
    pub fn series(rows: &[TrajectoryRow]) -> (Vec<f64>, Vec<Position>) {
        let values = rows.iter().map(|r| r.value).collect();
        let positions = rows.iter().filter_map(|r| r.action).collect();
        (values, positions)
    }
}

mod action_column {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Action;

    pub fn serialize<S: Serializer>(a: &Option<Action>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(a.map_or("none", Action::as_str))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Action>, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "none" => Ok(None),
            other => other.parse().map(Some).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    /// With mirroring: the opposite action taken from each same pre-state.
    pub mirrored: Option<Vec<TrajectoryStep>>,
}

impl RunOutput {
    /// Replay records: the taken transition, then its mirror if any.
    pub fn experiences(&self, variant: u32) -> Vec<Experience> {
        let mut out = Vec::new();
        for (i, s) in self.trajectory.steps.iter().enumerate() {
            out.push(s.experience(variant));
            if let Some(m) = &self.mirrored {
                out.push(m[i].experience(variant));
            }
        }
        out
    }
}

/// Runs `policy` from the environment's start to the last bar. Prices are
/// historical and unaffected by the agent's trades.
pub fn run_trajectory(
    env: &mut TradingEnv,
    policy: &mut dyn Policy,
    mirror: bool,
) -> Result<RunOutput> {
    env.reset();
    let mut steps = Vec::with_capacity(env.remaining());
    let mut mirrored = mirror.then(|| Vec::with_capacity(env.remaining()));
    while !env.done() {
        let action = policy.act(&env.decision());
        if let Some(m) = mirrored.as_mut() {
            let mut copy = env.clone();
            m.push(copy.step(action.opposite())?);
        }
        steps.push(env.step(action)?);
    }
    let last = env.series().bars()[env.t()];
    Ok(RunOutput {
        trajectory: Trajectory {
            instrument: env.series().instrument.clone(),
            steps,
            final_date: last.date,
            final_price: last.close,
            breaches: env.breaches(),
        },
        mirrored,
    })
}
