use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{train, AgentConfig, TrainingRun};
use crate::error::{Error, Result};
use crate::market_data::DatasetSplit;

/// Across-run statistics of one episode's Sharpe ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub mean: Option<f64>,
    /// Sample standard deviation; absent with fewer than two values.
    pub sd: Option<f64>,
    /// Runs contributing a defined value at this episode.
    pub n: usize,
}

impl CurvePoint {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: None,
                sd: None,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n >= 2).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self {
            mean: Some(mean),
            sd,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedPerformance {
    pub seeds: Vec<u64>,
    pub completed: usize,
    pub failures: Vec<RunFailure>,
    pub train: Vec<CurvePoint>,
    pub validation: Vec<CurvePoint>,
    pub test: Vec<CurvePoint>,
}

fn aggregate(
    runs: &[&TrainingRun],
    curve: impl Fn(&TrainingRun) -> Vec<Option<f64>>,
) -> Vec<CurvePoint> {
    let curves: Vec<Vec<Option<f64>>> = runs.iter().map(|r| curve(r)).collect();
    let episodes = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..episodes)
        .map(|e| {
            let values: Vec<f64> = curves
                .iter()
                .filter_map(|c| c.get(e).copied().flatten())
                .collect();
            CurvePoint::from_values(&values)
        })
        .collect()
}

/// Trains one agent per seed on up to `threads` worker threads and
/// aggregates the per-episode Sharpe curves. Results do not depend on the
/// thread count. Failed runs are reported and excluded.
pub fn expected_performance(
    split: &DatasetSplit,
    config: &AgentConfig,
    seeds: &[u64],
    threads: usize,
) -> Result<(ExpectedPerformance, Vec<Option<TrainingRun>>)> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 runs, got {}",
            seeds.len()
        )));
    }
    config.validate()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TrainingRun>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                log::info!("run {}/{} (seed {})", i + 1, seeds.len(), seeds[i]);
                let outcome = train(split, config, seeds[i]);
                results.lock().expect("no worker panicked")[i] = Some(outcome);
            });
        }
    });
    let mut failures = Vec::new();
    let mut runs = Vec::with_capacity(seeds.len());
    for (seed, r) in seeds
        .iter()
        .zip(results.into_inner().expect("no worker panicked"))
    {
        match r.expect("every run executed") {
            Ok(run) => runs.push(Some(run)),
            Err(e) => {
                log::warn!("run with seed {seed} failed: {e}");
                failures.push(RunFailure {
                    seed: *seed,
                    error: e.to_string(),
                });
                runs.push(None);
            }
        }
    }
    let done: Vec<&TrainingRun> = runs.iter().flatten().collect();
    let summary = ExpectedPerformance {
        seeds: seeds.to_vec(),
        completed: done.len(),
        failures,
        train: aggregate(&done, TrainingRun::train_curve),
        validation: aggregate(&done, TrainingRun::validation_curve),
        test: aggregate(&done, TrainingRun::test_curve),
    };
    Ok((summary, runs))
}
