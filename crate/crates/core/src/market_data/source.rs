use std::fs::File;
use std::path::PathBuf;
use std::time::Duration;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticKind;
use super::OhlcvSeries;
use crate::error::{Error, Result};

/// Calendar-day slack before a range mismatch is reported as truncation.
/// Covers weekends and holiday clusters at range edges.
const TRUNCATION_SLACK_DAYS: i64 = 7;

/// Where daily bars come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    /// Path template; `{ticker}` is substituted.
    File(String),
    Http(HttpSource),
    Synthetic(SyntheticKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSource {
    /// URL with `{ticker}`, `{start}` and `{end}` placeholders.
    pub url_template: String,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl DataSource {
    /// `http(s)://…` becomes an HTTP source, `synthetic:<kind>` a generated
    /// series, anything else a file path template.
    pub fn parse(spec: &str, timeout_secs: u64, retries: u32) -> Result<Self> {
        if spec.starts_with("http://") || spec.starts_with("https://") {
            Ok(DataSource::Http(HttpSource {
                url_template: spec.to_string(),
                timeout_secs,
                retries,
            }))
        } else if let Some(kind) = spec.strip_prefix("synthetic:") {
            Ok(DataSource::Synthetic(kind.parse()?))
        } else {
            Ok(DataSource::File(spec.to_string()))
        }
    }

    pub fn resolve_path(&self, ticker: &str) -> Option<PathBuf> {
        match self {
            DataSource::File(t) => Some(PathBuf::from(t.replace("{ticker}", ticker))),
            _ => None,
        }
    }
}

/// A loaded series with any non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub series: OhlcvSeries,
    pub warnings: Vec<String>,
}

pub fn load_series(
    source: &DataSource,
    instrument: &str,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<Loaded> {
    let full = match source {
        DataSource::File(_) => {
            let path = source.resolve_path(instrument).expect("file source");
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            OhlcvSeries::read_csv(instrument, file)?
        }
        DataSource::Http(http) => fetch_http(http, instrument, range)?,
        DataSource::Synthetic(kind) => kind.generate(instrument),
    };
    restrict(full, instrument, range)
}

fn restrict(
    full: OhlcvSeries,
    instrument: &str,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<Loaded> {
    let Some((start, end)) = range else {
        return Ok(Loaded {
            series: full,
            warnings: Vec::new(),
        });
    };
    let series = full.between(start, end);
    if series.is_empty() {
        return Err(Error::EmptySeries {
            instrument: instrument.to_string(),
        });
    }
    let mut warnings = Vec::new();
    let first = series.first_date().unwrap();
    let last = series.last_date().unwrap();
    if (first - start).num_days() > TRUNCATION_SLACK_DAYS {
        warnings.push(format!(
            "{instrument}: requested start {start} but first available bar is {first}"
        ));
    }
    if (end - last).num_days() > TRUNCATION_SLACK_DAYS {
        warnings.push(format!(
            "{instrument}: requested end {end} but last available bar is {last}"
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(Loaded { series, warnings })
}

fn fetch_http(
    http: &HttpSource,
    instrument: &str,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<OhlcvSeries> {
    let (start, end) = range
        .map(|(s, e)| (s.to_string(), e.to_string()))
        .unwrap_or_default();
    let url = http
        .url_template
        .replace("{ticker}", instrument)
        .replace("{start}", &start)
        .replace("{end}", &end);
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(http.timeout_secs.max(1)))
        .build();
    let mut last_err = String::new();
    for attempt in 0..=http.retries {
        match agent.get(&url).call() {
            Ok(resp) => {
                let body = resp.into_string().map_err(|e| Error::Http {
                    url: url.clone(),
                    message: e.to_string(),
                })?;
                return OhlcvSeries::read_csv(instrument, body.as_bytes());
            }
            Err(e) => {
                last_err = e.to_string();
                warn!("{url}: attempt {} failed: {last_err}", attempt + 1);
            }
        }
    }
    Err(Error::Http {
        url,
        message: last_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::OhlcvBar;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn fixture() -> OhlcvSeries {
        let bars = ["2014-01-02", "2014-01-03", "2014-01-06"]
            .iter()
            .enumerate()
            .map(|(i, s)| OhlcvBar {
                date: d(s),
                open: 10.0 + i as f64,
                high: 12.0 + i as f64,
                low: 9.0 + i as f64,
                close: 11.0 + i as f64,
                volume: 100.0,
            })
            .collect();
        OhlcvSeries::new("FIX", bars).unwrap()
    }

    #[test]
    fn early_range_start_truncates_with_warning() {
        let loaded = restrict(fixture(), "FIX", Some((d("2012-01-01"), d("2014-01-06")))).unwrap();
        assert_eq!(loaded.series.len(), 3);
        assert_eq!(loaded.series.first_date(), Some(d("2014-01-02")));
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("2014-01-02"));
    }

    #[test]
    fn holiday_edge_is_not_truncation() {
        let loaded = restrict(fixture(), "FIX", Some((d("2014-01-01"), d("2014-01-06")))).unwrap();
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn range_without_bars_is_empty_error() {
        assert!(matches!(
            restrict(fixture(), "FIX", Some((d("2016-01-01"), d("2016-12-31")))),
            Err(Error::EmptySeries { .. })
        ));
    }

    #[test]
    fn parse_sources() {
        assert!(matches!(
            DataSource::parse("https://example.org/{ticker}.csv", 5, 1).unwrap(),
            DataSource::Http(_)
        ));
        assert!(matches!(
            DataSource::parse("synthetic:sine", 5, 1).unwrap(),
            DataSource::Synthetic(_)
        ));
        let file = DataSource::parse("data/{ticker}.csv", 5, 1).unwrap();
        assert_eq!(
            file.resolve_path("AAPL"),
            Some(PathBuf::from("data/AAPL.csv"))
        );
    }

    #[test]
    fn missing_file_is_io_error() {
        let src = DataSource::File("/nonexistent/{ticker}.csv".into());
        assert!(matches!(
            load_series(&src, "X", None),
            Err(Error::Io { .. })
        ));
    }
}
