//! Deep Q-learning trading agent: ε-greedy exploration, experience replay,
//! double-DQN targets with a periodically synchronized target network, and
//! early stopping on validation Sharpe ratio.

mod expected;
mod replay;
mod trainer;

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{run_trajectory, Action, Decision, EnvConfig, TradingEnv, Trajectory};
use crate::error::{Error, Result};
use crate::market_data::{
    preprocess, AugmentationSpec, FeatureConfig, FeatureTable, NormStats, OhlcvSeries, Segment,
};
use crate::metrics::{full_report, PerformanceReport};
use crate::nn::{NetworkParams, NetworkSpec};

pub use expected::{expected_performance, CurvePoint, ExpectedPerformance, RunFailure};
pub use replay::ReplayMemory;
pub use trainer::{train, EpisodeRecord, Trainer, TrainerCheckpoint, TrainingData, TrainingRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which ε decays linearly.
    pub epsilon_decay_steps: u64,
    pub batch_size: usize,
    /// Environment steps between gradient updates.
    pub learn_every: u64,
    /// Gradient updates between target-network synchronizations.
    pub target_sync: u64,
    pub episodes: usize,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    /// Episodes without validation improvement before stopping.
    pub patience: usize,
    pub clip_threshold: f64,
    /// Also store the transition of the opposite action from each state.
    pub mirror: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.4,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_steps: 10_000,
            batch_size: 32,
            learn_every: 1,
            target_sync: 1000,
            episodes: 50,
            replay_capacity: 100_000,
            learning_rate: 1e-4,
            patience: 10,
            clip_threshold: 1.0,
            mirror: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(0.0..=1.0).contains(&self.gamma) {
            problems.push(format!("gamma {} not in [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            problems.push("epsilon bounds must lie in [0, 1]".to_string());
        }
        if self.epsilon_end > self.epsilon_start {
            problems.push(format!(
                "epsilon end {} exceeds start {}",
                self.epsilon_end, self.epsilon_start
            ));
        }
        for (name, v) in [
            ("epsilon decay steps", self.epsilon_decay_steps),
            ("batch size", self.batch_size as u64),
            ("learn-every", self.learn_every),
            ("target sync period", self.target_sync),
            ("episodes", self.episodes as u64),
            ("replay capacity", self.replay_capacity as u64),
            ("patience", self.patience as u64),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(self.clip_threshold > 0.0) {
            problems.push(format!(
                "clip threshold {} must be positive",
                self.clip_threshold
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Network shape and regularization, independent of the input width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
    pub l2_coefficient: f64,
    pub batch_norm: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let spec = NetworkSpec::new(1, &NetworkSpec::DEFAULT_HIDDEN);
        Self {
            hidden: NetworkSpec::DEFAULT_HIDDEN.to_vec(),
            leaky_slope: spec.leaky_slope,
            dropout_rate: spec.dropout_rate,
            l2_coefficient: spec.l2_coefficient,
            batch_norm: true,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, input_dim: usize) -> NetworkSpec {
        NetworkSpec {
            leaky_slope: self.leaky_slope,
            dropout_rate: self.dropout_rate,
            l2_coefficient: self.l2_coefficient,
            batch_norm: vec![self.batch_norm; self.hidden.len()],
            ..NetworkSpec::new(input_dim, &self.hidden)
        }
    }
}

/// Everything that shapes a training run apart from data and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub env: EnvConfig,
    pub network: NetworkConfig,
    pub hyper: Hyperparams,
    pub augmentation: AugmentationSpec,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                problems.push(e.to_string());
            }
        };
        check(self.env.validate());
        check(self.env.features.validate());
        check(self.network.spec(self.env.features.input_dim()).validate());
        check(self.hyper.validate());
        check(self.augmentation.validate());
        if self.network.batch_norm && self.hyper.batch_size < 2 {
            problems.push("batch normalization needs a batch size of at least 2".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Independent 64-bit seed for sub-stream `stream` of a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Linear decay from `start` to `end`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn from_hyperparams(h: &Hyperparams) -> Self {
        Self {
            start: h.epsilon_start,
            end: h.epsilon_end,
            decay_steps: h.epsilon_decay_steps,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            self.end
        } else {
            self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
        }
    }
}

/// Greedy on `q` (ties go to Long) with probability `1 - epsilon`, else uniform.
pub fn select_action<R: Rng + ?Sized>(q: [f64; 2], epsilon: f64, rng: &mut R) -> Action {
    if rng.gen::<f64>() < epsilon {
        if rng.gen_bool(0.5) {
            Action::Long
        } else {
            Action::Short
        }
    } else {
        greedy(q)
    }
}

pub fn greedy(q: [f64; 2]) -> Action {
    if q[Action::Long.index()] >= q[Action::Short.index()] {
        Action::Long
    } else {
        Action::Short
    }
}

/// `y = r` for terminal transitions, else `r + gamma * Q_target(o', argmax_a Q_main(o', a))`.
pub fn double_dqn_targets(
    rewards: &[f64],
    terminal: &[bool],
    q_main_next: &Array2<f64>,
    q_target_next: &Array2<f64>,
    gamma: f64,
) -> Vec<f64> {
    rewards
        .iter()
        .zip(terminal)
        .enumerate()
        .map(|(i, (&r, &done))| {
            if done {
                r
            } else {
                let a = greedy([q_main_next[[i, 0]], q_main_next[[i, 1]]]);
                r + gamma * q_target_next[[i, a.index()]]
            }
        })
        .collect()
}

/// Targets for a batch whose next observations are the rows of `next_inputs`.
pub fn compute_targets(
    rewards: &[f64],
    terminal: &[bool],
    next_inputs: ArrayView2<f64>,
    main: &NetworkParams,
    target: &NetworkParams,
    gamma: f64,
) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Constraint("empty batch".into()));
    }
    if rewards.len() != terminal.len() || rewards.len() != next_inputs.nrows() {
        return Err(Error::DimensionMismatch {
            expected: rewards.len(),
            actual: next_inputs.nrows(),
        });
    }
    let q_main = main.predict(next_inputs)?;
    let q_target = target.predict(next_inputs)?;
    Ok(double_dqn_targets(
        rewards, terminal, &q_main, &q_target, gamma,
    ))
}

/// A frozen policy: network parameters plus the preprocessing they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: NetworkParams,
    pub stats: NormStats,
    pub features: FeatureConfig,
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        self.features.input_dim()
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub trajectory: Trajectory,
    pub report: PerformanceReport,
}

/// Greedy run of `params` over an environment. Q-values for both positions
/// at every decision bar come from one batched eval-mode pass.
pub fn greedy_trajectory(params: &NetworkParams, env: &mut TradingEnv) -> Result<Trajectory> {
    let table = Arc::clone(env.features());
    let start = env.start();
    let end = env.series().len() - 1;
    let dim = table.input_dim();
    if params.spec.input_dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: params.spec.input_dim(),
        });
    }
    let n = end - start;
    let mut x = Array2::zeros((2 * n, dim));
    for k in 0..n {
        for a in Action::ALL {
            let row = x.row_mut(2 * k + a.index());
            table.write_input(
                start + k,
                a.code(),
                row.into_slice().expect("standard layout"),
            )?;
        }
    }
    let q = params.predict(x.view())?;
    let mut policy = |d: &Decision<'_>| {
        let r = 2 * (d.t - start) + d.position.index();
        greedy([q[[r, 0]], q[[r, 1]]])
    };
    Ok(run_trajectory(env, &mut policy, false)?.trajectory)
}

/// Greedy evaluation of `model` on `segment`; no learning takes place.
pub fn evaluate(
    model: &TrainedModel,
    segment: &Segment,
    env_config: &EnvConfig,
) -> Result<Evaluation> {
    if env_config.features != model.features {
        return Err(Error::Config(format!(
            "model expects features {:?}, environment uses {:?}",
            model.features, env_config.features
        )));
    }
    let table = preprocess(&segment.series, model.features, Some(&model.stats))?;
    let mut env = TradingEnv::new(
        Arc::new(segment.series.clone()),
        Arc::new(table),
        *env_config,
        segment.start,
    )?;
    let trajectory = greedy_trajectory(&model.params, &mut env)?;
    let report = full_report(&trajectory.values(), &trajectory.positions())?;
    Ok(Evaluation { trajectory, report })
}

/// Environment over `segment` normalized with given statistics.
pub(crate) fn segment_env(
    segment: &Segment,
    stats: &NormStats,
    config: &EnvConfig,
) -> Result<(Arc<OhlcvSeries>, Arc<FeatureTable>, usize)> {
    let table = preprocess(&segment.series, config.features, Some(stats))?;
    Ok((
        Arc::new(segment.series.clone()),
        Arc::new(table),
        segment.start,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn linear(bias: [f64; 2], dim: usize) -> NetworkParams {
        let spec = NetworkSpec {
            widths: vec![dim, 2],
            leaky_slope: 0.01,
            dropout_rate: 0.0,
            l2_coefficient: 0.0,
            batch_norm: vec![],
        };
        let mut p = NetworkParams::init_xavier(&spec, 0).unwrap();
        p.layers[0].w.fill(0.0);
        p.layers[0].b = Array1::from(bias.to_vec());
        p
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action([0.2, 0.7], 0.0, &mut rng), Action::Long);
        assert_eq!(select_action([0.7, 0.2], 0.0, &mut rng), Action::Short);
        assert_eq!(select_action([0.5, 0.5], 0.0, &mut rng), Action::Long);
    }

    #[test]
    fn uniform_exploration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let longs = (0..n)
            .filter(|_| select_action([1.0, 0.0], 1.0, &mut rng) == Action::Long)
            .count();
        let frac = longs as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn epsilon_schedule_monotone() {
        let s = EpsilonSchedule {
            start: 1.0,
            end: 0.01,
            decay_steps: 100,
        };
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(100), 0.01);
        assert_eq!(s.value(10_000), 0.01);
        for k in 0..150 {
            assert!(s.value(k + 1) <= s.value(k));
        }
    }

    #[test]
    fn worked_target_example() {
        let main = linear([0.5, 0.7], 3);
        let target = linear([0.4, 0.3], 3).as_target();
        let next = Array2::zeros((3, 3));
        let y = compute_targets(
            &[0.01, 0.03, 0.02],
            &[false, true, false],
            next.view(),
            &main,
            &target,
            0.9,
        )
        .unwrap();
        assert_eq!(y[0], 0.01 + 0.9 * 0.3);
        assert!((y[0] - 0.28).abs() < 1e-15);
        assert_eq!(y[1], 0.03);
        let myopic = compute_targets(
            &[0.01, 0.03, 0.02],
            &[false, true, false],
            next.view(),
            &main,
            &target,
            0.0,
        )
        .unwrap();
        assert_eq!(myopic, vec![0.01, 0.03, 0.02]);
    }

    #[test]
    fn same_network_gives_max_target() {
        let qm = array![[0.1, 0.4], [0.9, -0.2], [0.3, 0.3]];
        let y = double_dqn_targets(&[0.0; 3], &[false; 3], &qm, &qm, 1.0);
        assert_eq!(y, vec![0.4, 0.9, 0.3]);
    }

    #[test]
    fn config_validation_collects_problems() {
        let mut c = AgentConfig::default();
        c.hyper.gamma = 2.0;
        c.hyper.batch_size = 1;
        c.network.dropout_rate = 1.5;
        let msg = c.validate().unwrap_err().to_string();
        assert!(
            msg.contains("gamma") && msg.contains("dropout") && msg.contains("batch size"),
            "{msg}"
        );
        assert!(AgentConfig::default().validate().is_ok());
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 2), derive_seed(5, 2));
    }
}
