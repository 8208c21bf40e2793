use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    compute_targets, derive_seed, greedy_trajectory, segment_env, select_action, AgentConfig,
    EpsilonSchedule, ReplayMemory, TrainedModel,
};
use crate::env::TradingEnv;
use crate::error::{Error, Result};
use crate::market_data::{
    augment, preprocess, DatasetSplit, FeatureTable, NormStats, OhlcvSeries, Segment,
};
use crate::metrics::{daily_returns, sharpe_ratio};
use crate::nn::{clip_gradients, Adam, Mode, NetworkParams};

const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const AUGMENT_STREAM: u64 = 3;

/// A series prepared for the environment: normalized features and the bar
/// at which trading starts.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub series: Arc<OhlcvSeries>,
    pub table: Arc<FeatureTable>,
    pub start: usize,
}

impl EvalSet {
    fn env(&self, config: &crate::env::EnvConfig) -> Result<TradingEnv> {
        TradingEnv::new(
            Arc::clone(&self.series),
            Arc::clone(&self.table),
            *config,
            self.start,
        )
    }
}

/// Normalized training variants plus the evaluation segments of a split.
/// Normalization statistics come from the unaugmented training bars that
/// precede the validation tail.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub stats: NormStats,
    /// One episode series per augmentation variant.
    pub variants: Vec<EvalSet>,
    pub fit: EvalSet,
    pub validation: EvalSet,
    pub test: EvalSet,
    /// Noise draws floored during augmentation.
    pub clipped: usize,
    pub fingerprint: String,
}

impl TrainingData {
    pub fn prepare(split: &DatasetSplit, config: &AgentConfig, seed: u64) -> Result<Self> {
        let features = config.env.features;
        let fit = split.fit();
        let fit_table = preprocess(&fit, features, None)?;
        let stats = fit_table.stats().clone();
        let augmented = augment(
            &fit,
            &config.augmentation,
            derive_seed(seed, AUGMENT_STREAM),
        )?;
        let variants = augmented
            .series
            .into_iter()
            .map(|s| {
                let table = preprocess(&s, features, Some(&stats))?;
                let set = EvalSet {
                    series: Arc::new(s),
                    table: Arc::new(table),
                    start: 0,
                };
                set.env(&config.env)?;
                Ok(set)
            })
            .collect::<Result<Vec<_>>>()?;
        let eval_set = |segment: Segment| -> Result<EvalSet> {
            let (series, table, start) = segment_env(&segment, &stats, &config.env)?;
            let set = EvalSet {
                series,
                table,
                start,
            };
            set.env(&config.env)?;
            Ok(set)
        };
        let warmup = features.warmup();
        let mut hasher = Sha256::new();
        hasher.update(split.train.fingerprint());
        hasher.update(split.test.fingerprint());
        hasher.update(split.validation.len().to_le_bytes());
        Ok(Self {
            variants,
            fit: eval_set(Segment::whole(fit))?,
            validation: eval_set(split.validation_segment(warmup))?,
            test: eval_set(split.test_segment(warmup))?,
            stats,
            clipped: augmented.clipped,
            fingerprint: hex::encode(hasher.finalize()),
        })
    }

    fn model(&self, params: &NetworkParams) -> TrainedModel {
        TrainedModel {
            params: params.clone(),
            stats: self.stats.clone(),
            features: self.fit.table.config(),
        }
    }
}

/// Greedy-policy Sharpe ratios after one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub variant: usize,
    /// Exploration rate at the end of the episode.
    pub epsilon: f64,
    pub updates: u64,
    pub mean_loss: Option<f64>,
    pub train_sharpe: Option<f64>,
    pub validation_sharpe: Option<f64>,
    pub test_sharpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BestModel {
    episode: usize,
    validation_sharpe: Option<f64>,
    params: NetworkParams,
}

/// Complete trainer state: resuming from it continues bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerCheckpoint {
    pub config: AgentConfig,
    pub seed: u64,
    pub data_fingerprint: String,
    episode: usize,
    steps: u64,
    updates: u64,
    main: NetworkParams,
    target: NetworkParams,
    adam: Adam,
    replay: ReplayMemory,
    rng: ChaCha8Rng,
    history: Vec<EpisodeRecord>,
    best: Option<BestModel>,
    since_best: usize,
    stopped_early: bool,
}

impl TrainerCheckpoint {
    pub fn episodes_completed(&self) -> usize {
        self.episode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub seed: u64,
    pub data_fingerprint: String,
    pub history: Vec<EpisodeRecord>,
    pub best_episode: usize,
    /// Parameters of the episode with the highest validation Sharpe ratio.
    pub best: TrainedModel,
    pub final_model: TrainedModel,
    pub stopped_early: bool,
    pub experiences_stored: u64,
    pub updates: u64,
    pub steps: u64,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl TrainingRun {
    pub fn train_curve(&self) -> Vec<Option<f64>> {
        self.history.iter().map(|r| r.train_sharpe).collect()
    }

    pub fn validation_curve(&self) -> Vec<Option<f64>> {
        self.history.iter().map(|r| r.validation_sharpe).collect()
    }

    pub fn test_curve(&self) -> Vec<Option<f64>> {
        self.history.iter().map(|r| r.test_sharpe).collect()
    }
}

pub struct Trainer<'a> {
    data: &'a TrainingData,
    state: TrainerCheckpoint,
    elapsed: Duration,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a TrainingData, config: &AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if data.variants.is_empty() {
            return Err(Error::Config("no training series".into()));
        }
        let spec = config.network.spec(data.fit.table.input_dim());
        let main = NetworkParams::init_xavier(&spec, derive_seed(seed, INIT_STREAM))?;
        let target = main.as_target();
        let adam = Adam::new(&main, config.hyper.learning_rate);
        Ok(Self {
            data,
            state: TrainerCheckpoint {
                config: config.clone(),
                seed,
                data_fingerprint: data.fingerprint.clone(),
                episode: 0,
                steps: 0,
                updates: 0,
                main,
                target,
                adam,
                replay: ReplayMemory::new(config.hyper.replay_capacity),
                rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, TRAIN_STREAM)),
                history: Vec::new(),
                best: None,
                since_best: 0,
                stopped_early: false,
            },
            elapsed: Duration::ZERO,
        })
    }

    pub fn resume(data: &'a TrainingData, checkpoint: TrainerCheckpoint) -> Result<Self> {
        if checkpoint.data_fingerprint != data.fingerprint {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on data {} but {} was supplied",
                checkpoint.data_fingerprint, data.fingerprint
            )));
        }
        if checkpoint.main.spec.input_dim() != data.fit.table.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: data.fit.table.input_dim(),
                actual: checkpoint.main.spec.input_dim(),
            });
        }
        Ok(Self {
            data,
            state: checkpoint,
            elapsed: Duration::ZERO,
        })
    }

    pub fn checkpoint(&self) -> &TrainerCheckpoint {
        &self.state
    }

    pub fn main(&self) -> &NetworkParams {
        &self.state.main
    }

    pub fn target(&self) -> &NetworkParams {
        &self.state.target
    }

    pub fn replay(&self) -> &ReplayMemory {
        &self.state.replay
    }

    pub fn updates(&self) -> u64 {
        self.state.updates
    }

    pub fn history(&self) -> &[EpisodeRecord] {
        &self.state.history
    }

    pub fn finished(&self) -> bool {
        self.state.stopped_early || self.state.episode >= self.state.config.hyper.episodes
    }

    /// One pass over the next training variant followed by greedy evaluation
    /// on the training, validation and test segments.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let started = Instant::now();
        let data = self.data;
        let config = self.state.config.clone();
        let h = &config.hyper;
        let schedule = EpsilonSchedule::from_hyperparams(h);
        let variant = self.state.episode % data.variants.len();
        let set = &data.variants[variant];
        let mut env = set.env(&config.env)?;
        let mut input = Array2::zeros((1, set.table.input_dim()));
        let (mut loss_sum, mut losses) = (0.0, 0u64);

        while !env.done() {
            let epsilon = schedule.value(self.state.steps);
            env.decision()
                .write_input(input.row_mut(0).into_slice().expect("standard layout"))?;
            let q = self.state.main.predict(input.view())?;
            let action = select_action([q[[0, 0]], q[[0, 1]]], epsilon, &mut self.state.rng);
            let taken = if h.mirror {
                let mut copy = env.clone();
                let mirrored = copy.step(action.opposite())?;
                let taken = env.step(action)?;
                self.state.replay.push(taken.experience(variant as u32));
                self.state.replay.push(mirrored.experience(variant as u32));
                taken
            } else {
                let taken = env.step(action)?;
                self.state.replay.push(taken.experience(variant as u32));
                taken
            };
            self.state.steps += 1;
            if self.state.steps.is_multiple_of(h.learn_every) && self.state.replay.len() >= h.batch_size {
                loss_sum += self.learn().map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!(
                        "{m} (episode {}, bar {}, update {})",
                        self.state.episode, taken.t, self.state.updates
                    )),
                    other => other,
                })?;
                losses += 1;
            }
        }

        let train_sharpe = greedy_sharpe(&self.state.main, &data.fit, &config.env)?;
        let validation_sharpe = greedy_sharpe(&self.state.main, &data.validation, &config.env)?;
        let test_sharpe = greedy_sharpe(&self.state.main, &data.test, &config.env)?;
        let record = EpisodeRecord {
            episode: self.state.episode,
            variant,
            epsilon: schedule.value(self.state.steps),
            updates: self.state.updates,
            mean_loss: (losses > 0).then(|| loss_sum / losses as f64),
            train_sharpe,
            validation_sharpe,
            test_sharpe,
        };

        let score = validation_sharpe.unwrap_or(f64::NEG_INFINITY);
        let improved = match &self.state.best {
            None => true,
            Some(b) => score > b.validation_sharpe.unwrap_or(f64::NEG_INFINITY),
        };
        if improved {
            self.state.best = Some(BestModel {
                episode: self.state.episode,
                validation_sharpe,
                params: self.state.main.clone(),
            });
            self.state.since_best = 0;
        } else {
            self.state.since_best += 1;
            if self.state.since_best >= h.patience {
                self.state.stopped_early = true;
            }
        }
        self.state.history.push(record.clone());
        self.state.episode += 1;
        self.elapsed += started.elapsed();

        let fmt = |s: Option<f64>| s.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        log::info!(
            "episode {}/{}: train Sharpe {}, validation {}, test {}, epsilon {:.3}, updates {}",
            record.episode + 1,
            h.episodes,
            fmt(record.train_sharpe),
            fmt(record.validation_sharpe),
            fmt(record.test_sharpe),
            record.epsilon,
            record.updates
        );
        if self.state.stopped_early {
            log::info!(
                "early stop: no validation improvement in {} episodes",
                h.patience
            );
        }
        Ok(record)
    }

    /// One gradient update on a sampled minibatch; returns the loss.
    fn learn(&mut self) -> Result<f64> {
        let h = &self.state.config.hyper;
        let batch = self.state.replay.sample(h.batch_size, &mut self.state.rng);
        let dim = self.data.fit.table.input_dim();
        let mut x = Array2::zeros((batch.len(), dim));
        let mut next = Array2::zeros((batch.len(), dim));
        for (i, e) in batch.iter().enumerate() {
            let table = &self.data.variants[e.variant as usize].table;
            let t = e.t as usize;
            table.write_input(
                t,
                e.position.code(),
                x.row_mut(i).into_slice().expect("standard layout"),
            )?;
            table.write_input(
                t + 1,
                e.action.code(),
                next.row_mut(i).into_slice().expect("standard layout"),
            )?;
        }
        let rewards: Vec<f64> = batch.iter().map(|e| e.reward).collect();
        let terminal: Vec<bool> = batch.iter().map(|e| e.terminal).collect();
        let actions: Vec<usize> = batch.iter().map(|e| e.action.index()).collect();
        let targets = compute_targets(
            &rewards,
            &terminal,
            next.view(),
            &self.state.main,
            &self.state.target,
            h.gamma,
        )?;

        let pass = self
            .state
            .main
            .forward(x.view(), Mode::Train, &mut self.state.rng)?;
        let (loss, mut grads) = self.state.main.backward(&pass, &actions, &targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        clip_gradients(&mut grads, h.clip_threshold);
        self.state.adam.step(&mut self.state.main, &grads)?;
        self.state.main.update_running_stats(&pass);
        self.state.updates += 1;
        if self.state.updates.is_multiple_of(h.target_sync) {
            self.state.target.copy_from(&self.state.main);
        }
        Ok(loss)
    }

    pub fn run(mut self) -> Result<TrainingRun> {
        while !self.finished() {
            self.run_episode()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainingRun {
        let s = self.state;
        let best = s.best.expect("at least one episode");
        TrainingRun {
            seed: s.seed,
            data_fingerprint: s.data_fingerprint,
            history: s.history,
            best_episode: best.episode,
            best: self.data.model(&best.params),
            final_model: self.data.model(&s.main),
            stopped_early: s.stopped_early,
            experiences_stored: s.replay.inserted(),
            updates: s.updates,
            steps: s.steps,
            wall_clock: self.elapsed,
        }
    }
}

fn greedy_sharpe(
    params: &NetworkParams,
    set: &EvalSet,
    config: &crate::env::EnvConfig,
) -> Result<Option<f64>> {
    let mut env = set.env(config)?;
    let trajectory = greedy_trajectory(params, &mut env)?;
    Ok(sharpe_ratio(&daily_returns(&trajectory.values())?).value())
}

/// Prepares the data of `split` and trains a fresh agent on it.
pub fn train(split: &DatasetSplit, config: &AgentConfig, seed: u64) -> Result<TrainingRun> {
    let data = TrainingData::prepare(split, config, seed)?;
    let trainer = Trainer::new(&data, config, seed)?;
    if trainer.finished() {
        return Err(Error::Config("no episodes to run".into()));
    }
    trainer.run()
}
