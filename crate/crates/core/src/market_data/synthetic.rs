//! Deterministic synthetic price series for tests, smoke runs and demos.

use std::f64::consts::PI;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{OhlcvBar, OhlcvSeries};
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SyntheticKind {
    Sine {
        period: f64,
        amplitude: f64,
        len: usize,
    },
    Rising {
        len: usize,
        daily_growth: f64,
    },
    Falling {
        len: usize,
        daily_decline: f64,
    },
    RandomWalk {
        len: usize,
        volatility: f64,
        seed: u64,
    },
}

impl SyntheticKind {
    pub fn generate(&self, instrument: &str) -> OhlcvSeries {
        let closes: Vec<f64> = match *self {
            SyntheticKind::Sine {
                period,
                amplitude,
                len,
            } => sine_closes(len, period, amplitude),
            SyntheticKind::Rising { len, daily_growth } => (0..len)
                .map(|t| 100.0 * (1.0 + daily_growth).powi(t as i32))
                .collect(),
            SyntheticKind::Falling { len, daily_decline } => (0..len)
                .map(|t| 100.0 * (1.0 - daily_decline).powi(t as i32))
                .collect(),
            SyntheticKind::RandomWalk {
                len,
                volatility,
                seed,
            } => random_walk_closes(len, volatility, seed),
        };
        bars_from_closes(instrument, &closes)
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    /// `sine[:period[:amplitude[:len]]]`, `rising[:len]`, `falling[:len]`,
    /// `random-walk[:seed[:len]]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let num = |i: usize, default: f64| -> Result<f64, Error> {
            args.get(i)
                .map(|a| {
                    a.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad synthetic argument {a:?}")))
                })
                .unwrap_or(Ok(default))
        };
        match kind {
            "sine" => Ok(SyntheticKind::Sine {
                period: num(0, 20.0)?,
                amplitude: num(1, 0.1)?,
                len: num(2, 2000.0)? as usize,
            }),
            "rising" => Ok(SyntheticKind::Rising {
                len: num(0, 500.0)? as usize,
                daily_growth: 0.002,
            }),
            "falling" => Ok(SyntheticKind::Falling {
                len: num(0, 500.0)? as usize,
                daily_decline: 0.002,
            }),
            "random-walk" => Ok(SyntheticKind::RandomWalk {
                seed: num(0, 0.0)? as u64,
                len: num(1, 1000.0)? as usize,
                volatility: 0.015,
            }),
            other => Err(Error::Config(format!("unknown synthetic series {other:?}"))),
        }
    }
}

/// `100 * (1 + amplitude * sin(2 pi t / period))`.
pub fn sine_closes(len: usize, period: f64, amplitude: f64) -> Vec<f64> {
    (0..len)
        .map(|t| 100.0 * (1.0 + amplitude * (2.0 * PI * t as f64 / period).sin()))
        .collect()
}

/// Gaussian daily returns, clipped to +-8% so the default 10% move bound holds.
pub fn random_walk_closes(len: usize, volatility: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0003, volatility).expect("valid volatility");
    let mut price = 100.0;
    (0..len)
        .map(|t| {
            if t > 0 {
                let r: f64 = normal.sample(&mut rng);
                price *= 1.0 + r.clamp(-0.08, 0.08);
            }
            price
        })
        .collect()
}

/// Weekday calendar starting 2012-01-02.
pub fn business_days(len: usize) -> Vec<NaiveDate> {
    let mut day = NaiveDate::from_ymd_opt(2012, 1, 2).unwrap();
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day.succ_opt().unwrap();
    }
    out
}

/// Bars whose open is the previous close and whose range brackets both.
pub fn bars_from_closes(instrument: &str, closes: &[f64]) -> OhlcvSeries {
    let dates = business_days(closes.len());
    let bars = closes
        .iter()
        .enumerate()
        .map(|(t, &close)| {
            let open = if t == 0 { close } else { closes[t - 1] };
            OhlcvBar {
                date: dates[t],
                open,
                high: open.max(close) * 1.001,
                low: open.min(close) * 0.999,
                close,
                volume: 1_000_000.0,
            }
        })
        .collect();
    OhlcvSeries::new(instrument, bars).expect("synthetic bars satisfy invariants")
}
