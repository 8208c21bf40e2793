//! Daily OHLCV ingestion, splitting, preprocessing and augmentation.

mod augment;
mod preprocess;
mod source;
mod split;
pub mod synthetic;
mod testbench;

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use augment::{augment, AugmentationSpec, Augmented};
pub use preprocess::{
    preprocess, raw_features, FeatureConfig, FeatureTable, FeatureWindow, NormStats,
    FEATURES_PER_BAR,
};
pub use source::{load_series, DataSource, HttpSource, Loaded};
pub use split::{split_series, DatasetSplit, Segment};
pub use testbench::{Instrument, Testbench};

/// Header of the canonical CSV storage format.
pub const CSV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl OhlcvBar {
    /// Checks the price-ordering and positivity invariants of a bar.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(format!("{}: prices must be finite and positive", self.date));
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err(format!(
                "{}: volume must be finite and non-negative",
                self.date
            ));
        }
        if self.high < self.low {
            return Err(format!(
                "{}: high {} < low {}",
                self.date, self.high, self.low
            ));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("{}: low {} above open/close", self.date, self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "{}: high {} below open/close",
                self.date, self.high
            ));
        }
        Ok(())
    }

    /// Values in feature order: open, high, low, close, volume.
    pub fn values(&self) -> [f64; 5] {
        [self.open, self.high, self.low, self.close, self.volume]
    }
}

/// Time-ordered daily bars of one instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcvSeries {
    pub instrument: String,
    bars: Vec<OhlcvBar>,
}

impl OhlcvSeries {
    /// Builds a series, rejecting bars that break the invariants or are out of order.
    pub fn new(instrument: impl Into<String>, bars: Vec<OhlcvBar>) -> Result<Self> {
        for (i, bar) in bars.iter().enumerate() {
            bar.validate().map_err(|message| Error::MalformedRow {
                line: i + 1,
                message,
            })?;
            if i > 0 && bars[i - 1].date >= bar.date {
                return Err(Error::MalformedRow {
                    line: i + 1,
                    message: format!("date {} not strictly after {}", bar.date, bars[i - 1].date),
                });
            }
        }
        Ok(Self {
            instrument: instrument.into(),
            bars,
        })
    }

    pub fn bars(&self) -> &[OhlcvBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.bars.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.bars.last().map(|b| b.date)
    }

    /// Sub-series over `range` of bar indices.
    pub fn slice(&self, range: std::ops::Range<usize>) -> OhlcvSeries {
        OhlcvSeries {
            instrument: self.instrument.clone(),
            bars: self.bars[range].to_vec(),
        }
    }

    /// Bars dated within `[start, end]`.
    pub fn between(&self, start: NaiveDate, end: NaiveDate) -> OhlcvSeries {
        OhlcvSeries {
            instrument: self.instrument.clone(),
            bars: self
                .bars
                .iter()
                .filter(|b| b.date >= start && b.date <= end)
                .copied()
                .collect(),
        }
    }

    /// Parses the canonical CSV schema. Errors carry 1-based file line numbers.
    pub fn read_csv<R: Read>(instrument: &str, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
        if names != CSV_HEADER {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!(
                    "expected header {:?}, found {:?}",
                    CSV_HEADER.join(","),
                    names.join(",")
                ),
            });
        }
        let mut bars = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::MalformedRow {
                line,
                message: e.to_string(),
            })?;
            if record.len() != 6 {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("expected 6 fields, found {}", record.len()),
                });
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| {
                Error::MalformedRow {
                    line,
                    message: format!("bad date {:?}: {e}", &record[0]),
                }
            })?;
            let mut nums = [0.0; 5];
            for (k, slot) in nums.iter_mut().enumerate() {
                let field = &record[k + 1];
                *slot = field.parse::<f64>().map_err(|_| Error::MalformedRow {
                    line,
                    message: format!("bad {} value {:?}", CSV_HEADER[k + 1], field),
                })?;
            }
            let bar = OhlcvBar {
                date,
                open: nums[0],
                high: nums[1],
                low: nums[2],
                close: nums[3],
                volume: nums[4],
            };
            bar.validate()
                .map_err(|message| Error::MalformedRow { line, message })?;
            bars.push(bar);
        }
        bars.sort_by_key(|b| b.date);
        for w in bars.windows(2) {
            if w[0].date == w[1].date {
                return Err(Error::MalformedRow {
                    line: 0,
                    message: format!("duplicate date {}", w[0].date),
                });
            }
        }
        if bars.is_empty() {
            return Err(Error::EmptySeries {
                instrument: instrument.to_string(),
            });
        }
        Ok(Self {
            instrument: instrument.to_string(),
            bars,
        })
    }

    /// Writes the canonical CSV schema; floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(CSV_HEADER)?;
        for b in &self.bars {
            wtr.write_record([
                b.date.format("%Y-%m-%d").to_string(),
                b.open.to_string(),
                b.high.to_string(),
                b.low.to_string(),
                b.close.to_string(),
                b.volume.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical CSV rendering.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        hex::encode(Sha256::digest(&buf))
    }
}
