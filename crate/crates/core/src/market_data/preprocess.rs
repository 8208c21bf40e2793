use serde::{Deserialize, Serialize};

use super::OhlcvSeries;
use crate::error::{Error, Result};

/// open, high, low, close, volume.
pub const FEATURES_PER_BAR: usize = 5;

pub type FeatureRow = [f64; FEATURES_PER_BAR];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// History length: each observation spans `tau + 1` bars.
    pub tau: usize,
    /// Trailing moving-average window of the low-pass filter; 1 disables it.
    pub filter_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            tau: 30,
            filter_window: 5,
        }
    }
}

impl FeatureConfig {
    /// Index of the first bar with a complete observation window.
    pub fn warmup(&self) -> usize {
        self.tau + self.filter_window
    }

    /// Length of the flattened network input: windowed features plus position.
    pub fn input_dim(&self) -> usize {
        (self.tau + 1) * FEATURES_PER_BAR + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_window == 0 {
            return Err(Error::Config("filter window must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-feature min-max scaling parameters captured on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: FeatureRow,
    pub max: FeatureRow,
}

impl NormStats {
    pub fn from_rows(rows: &[FeatureRow]) -> Self {
        let mut min = [f64::INFINITY; FEATURES_PER_BAR];
        let mut max = [f64::NEG_INFINITY; FEATURES_PER_BAR];
        for row in rows {
            for k in 0..FEATURES_PER_BAR {
                min[k] = min[k].min(row[k]);
                max[k] = max[k].max(row[k]);
            }
        }
        Self { min, max }
    }

    /// Maps the training range of each feature onto [-1, 1]; a degenerate
    /// range maps to 0.
    pub fn apply(&self, row: &FeatureRow) -> FeatureRow {
        let mut out = [0.0; FEATURES_PER_BAR];
        for k in 0..FEATURES_PER_BAR {
            let span = self.max[k] - self.min[k];
            out[k] = if span > 0.0 {
                2.0 * (row[k] - self.min[k]) / span - 1.0
            } else {
                0.0
            };
        }
        out
    }
}

/// `tau + 1` consecutive normalized feature rows ending at the decision bar.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub rows: Vec<FeatureRow>,
}

impl FeatureWindow {
    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

/// Normalized features for every bar of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    config: FeatureConfig,
    stats: NormStats,
    /// `rows[k]` describes bar `k + config.filter_window`.
    rows: Vec<FeatureRow>,
    series_len: usize,
}

/// Smoothed-then-differenced relative changes, one row per bar from index
/// `filter_window` onwards. No lookahead: row `t` only uses bars `<= t`.
pub fn raw_features(series: &OhlcvSeries, filter_window: usize) -> Vec<FeatureRow> {
    let bars = series.bars();
    let n = bars.len();
    if filter_window == 0 || n <= filter_window {
        return Vec::new();
    }
    let w = filter_window;
    // w == 1 must be exactly the identity.
    let mut smoothed = vec![[0.0; FEATURES_PER_BAR]; n];
    for t in w - 1..n {
        for k in 0..FEATURES_PER_BAR {
            smoothed[t][k] = if w == 1 {
                bars[t].values()[k]
            } else {
                bars[t + 1 - w..=t]
                    .iter()
                    .map(|b| b.values()[k])
                    .sum::<f64>()
                    / w as f64
            };
        }
    }
    (w..n)
        .map(|t| {
            let mut row = [0.0; FEATURES_PER_BAR];
            for k in 0..FEATURES_PER_BAR {
                let prev = smoothed[t - 1][k];
                row[k] = if prev != 0.0 {
                    (smoothed[t][k] - prev) / prev
                } else {
                    0.0
                };
            }
            row
        })
        .collect()
}

/// Builds the normalized feature table. With `stats == None` the statistics
/// are captured from this series, which must then be training data.
pub fn preprocess(
    series: &OhlcvSeries,
    config: FeatureConfig,
    stats: Option<&NormStats>,
) -> Result<FeatureTable> {
    config.validate()?;
    let needed = config.tau + 1 + config.filter_window;
    if series.len() < needed {
        return Err(Error::SeriesTooShort {
            needed,
            actual: series.len(),
        });
    }
    let raw = raw_features(series, config.filter_window);
    let stats = stats.cloned().unwrap_or_else(|| NormStats::from_rows(&raw));
    let rows = raw.iter().map(|r| stats.apply(r)).collect();
    Ok(FeatureTable {
        config,
        stats,
        rows,
        series_len: series.len(),
    })
}

impl FeatureTable {
    pub fn config(&self) -> FeatureConfig {
        self.config
    }

    pub fn stats(&self) -> &NormStats {
        &self.stats
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    /// First bar index with a complete window.
    pub fn first_index(&self) -> usize {
        self.config.warmup()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    /// Window ending at bar `t`, or `None` during warm-up.
    pub fn window(&self, t: usize) -> Option<FeatureWindow> {
        if t < self.first_index() || t >= self.series_len {
            return None;
        }
        let end = t - self.config.filter_window;
        Some(FeatureWindow {
            rows: self.rows[end - self.config.tau..=end].to_vec(),
        })
    }

    /// Writes the flattened window at `t` followed by `position_code` into `out`.
    pub fn write_input(&self, t: usize, position_code: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: out.len(),
            });
        }
        if t < self.first_index() || t >= self.series_len {
            return Err(Error::SeriesTooShort {
                needed: self.first_index() + 1,
                actual: t + 1,
            });
        }
        let end = t - self.config.filter_window;
        let mut i = 0;
        for row in &self.rows[end - self.config.tau..=end] {
            out[i..i + FEATURES_PER_BAR].copy_from_slice(row);
            i += FEATURES_PER_BAR;
        }
        out[i] = position_code;
        Ok(())
    }
}
