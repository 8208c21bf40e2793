use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::OhlcvSeries;
use crate::error::{Error, Result};

/// Chronological train/validation/test partition. Validation is the trailing
/// part of the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: OhlcvSeries,
    pub validation: OhlcvSeries,
    pub test: OhlcvSeries,
}

pub fn split_series(
    series: &OhlcvSeries,
    train_end: NaiveDate,
    validation_fraction: f64,
) -> Result<DatasetSplit> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::Split(format!(
            "validation fraction {validation_fraction} not in (0, 1)"
        )));
    }
    let (Some(first), Some(last)) = (series.first_date(), series.last_date()) else {
        return Err(Error::Split("empty series".into()));
    };
    if train_end < first || train_end >= last {
        return Err(Error::Split(format!(
            "train end {train_end} outside series range {first}..{last}"
        )));
    }
    let cut = series.bars().partition_point(|b| b.date <= train_end);
    split_at_index(series, cut, validation_fraction)
}

/// Split with the first `train_len` bars as training data.
pub(crate) fn split_at_index(
    series: &OhlcvSeries,
    train_len: usize,
    validation_fraction: f64,
) -> Result<DatasetSplit> {
    if train_len == 0 || train_len >= series.len() {
        return Err(Error::Split(format!(
            "train length {train_len} leaves an empty side of {} bars",
            series.len()
        )));
    }
    if train_len < 2 {
        return Err(Error::Split(
            "training set needs at least 2 bars to carve out validation".into(),
        ));
    }
    let val_len =
        ((train_len as f64 * validation_fraction).round() as usize).clamp(1, train_len - 1);
    let train = series.slice(0..train_len);
    Ok(DatasetSplit {
        validation: train.slice(train_len - val_len..train_len),
        train,
        test: series.slice(train_len..series.len()),
    })
}

impl DatasetSplit {
    /// Split by bar count rather than date.
    pub fn by_count(
        series: &OhlcvSeries,
        train_len: usize,
        validation_fraction: f64,
    ) -> Result<Self> {
        split_at_index(series, train_len, validation_fraction)
    }

    /// Training bars that precede the validation tail.
    pub fn fit(&self) -> OhlcvSeries {
        self.train
            .slice(0..self.train.len() - self.validation.len())
    }

    /// Validation bars preceded by up to `warmup` bars of history.
    pub fn validation_segment(&self, warmup: usize) -> Segment {
        let val_start = self.train.len() - self.validation.len();
        let from = val_start.saturating_sub(warmup);
        Segment {
            series: self.train.slice(from..self.train.len()),
            start: val_start - from,
        }
    }

    /// Test bars preceded by up to `warmup` bars of training history.
    pub fn test_segment(&self, warmup: usize) -> Segment {
        let from = self.train.len().saturating_sub(warmup);
        let mut bars = self.train.bars()[from..].to_vec();
        bars.extend_from_slice(self.test.bars());
        Segment {
            series: OhlcvSeries::new(self.test.instrument.clone(), bars)
                .expect("split parts are ordered"),
            start: self.train.len() - from,
        }
    }
}

/// A series on which trading starts at bar `start`; earlier bars are history only.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub series: OhlcvSeries,
    pub start: usize,
}

impl Segment {
    pub fn whole(series: OhlcvSeries) -> Self {
        Segment { series, start: 0 }
    }
}
