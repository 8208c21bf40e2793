//! Performance indicators computed from a portfolio-value trajectory.
//!
//! Ratios are annualized with 252 trading days per year. An indicator that
//! is undefined for the input (zero variance, no losing trade, ...) is
//! reported as [`Indicator::Undefined`] or [`Indicator::Infinite`], never as
//! a fabricated number.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::env::Position;
use crate::error::{Error, Result};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Indicator {
    Value(f64),
    /// Positive infinity, e.g. a profit-and-loss ratio without losing trades.
    Infinite,
    Undefined,
}

impl Indicator {
    pub fn value(self) -> Option<f64> {
        match self {
            Indicator::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_defined(self) -> bool {
        !matches!(self, Indicator::Undefined)
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Indicator::Value(v) => write!(f, "{v}"),
            Indicator::Infinite => f.write_str("inf"),
            Indicator::Undefined => f.write_str(""),
        }
    }
}

impl Serialize for Indicator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Indicator::Value(v) => s.serialize_f64(*v),
            Indicator::Infinite => s.serialize_str("inf"),
            Indicator::Undefined => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Indicator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
            Null(()),
        }
        match Option::<Repr>::deserialize(d)? {
            None | Some(Repr::Null(())) => Ok(Indicator::Undefined),
            Some(Repr::Num(v)) => Ok(Indicator::Value(v)),
            Some(Repr::Text(t)) if t == "inf" => Ok(Indicator::Infinite),
            Some(Repr::Text(t)) => Err(serde::de::Error::custom(format!("bad indicator {t:?}"))),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n - 1) standard deviation.
fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// `(v_t - v_{t-1}) / v_{t-1}` for consecutive values.
pub fn daily_returns(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            actual: values.len(),
        });
    }
    Ok(values.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
}

/// `sqrt(252) * mean / sd`, risk-free rate neglected.
pub fn sharpe_ratio(returns: &[f64]) -> Indicator {
    if returns.len() < 2 {
        return Indicator::Undefined;
    }
    let sd = sample_sd(returns);
    if sd == 0.0 || !sd.is_finite() {
        return Indicator::Undefined;
    }
    Indicator::Value(TRADING_DAYS_PER_YEAR.sqrt() * mean(returns) / sd)
}

/// Like the Sharpe ratio with the root-mean-square of negative returns as
/// the risk measure.
pub fn sortino_ratio(returns: &[f64]) -> Indicator {
    let negatives: Vec<f64> = returns.iter().copied().filter(|r| *r < 0.0).collect();
    if negatives.is_empty() {
        return Indicator::Undefined;
    }
    let downside = (negatives.iter().map(|r| r * r).sum::<f64>() / negatives.len() as f64).sqrt();
    Indicator::Value(TRADING_DAYS_PER_YEAR.sqrt() * mean(returns) / downside)
}

/// Largest relative fall from a running peak, and the number of bars from
/// that peak to the trough.
pub fn drawdown(values: &[f64]) -> (f64, usize) {
    let mut peak_idx = 0;
    let mut worst = 0.0;
    let mut duration = 0;
    for (j, &v) in values.iter().enumerate() {
        if v > values[peak_idx] {
            peak_idx = j;
        }
        let peak = values[peak_idx];
        if peak > 0.0 {
            let dd = (peak - v) / peak;
            if dd > worst {
                worst = dd;
                duration = j - peak_idx;
            }
        }
    }
    (worst, duration)
}

/// Trade-level outcomes: one trade per interval of constant position.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeSummary {
    pub count: usize,
    pub winners: usize,
    pub losers: usize,
    pub gross_profit: f64,
    pub gross_loss: f64,
}

/// `values` has one more entry than `positions`: position `k` is held from
/// value `k` to value `k + 1`.
pub fn trade_summary(values: &[f64], positions: &[Position]) -> TradeSummary {
    let mut s = TradeSummary {
        count: 0,
        winners: 0,
        losers: 0,
        gross_profit: 0.0,
        gross_loss: 0.0,
    };
    if positions.is_empty() {
        return s;
    }
    let close = |from: usize, to: usize, s: &mut TradeSummary| {
        let change = values[to] - values[from];
        s.count += 1;
        if change > 0.0 {
            s.winners += 1;
            s.gross_profit += change;
        } else if change < 0.0 {
            s.losers += 1;
            s.gross_loss += -change;
        }
    };
    let mut start = 0;
    for k in 1..positions.len() {
        if positions[k] != positions[k - 1] {
            close(start, k, &mut s);
            start = k;
        }
    }
    close(start, positions.len(), &mut s);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    #[serde(rename = "Sharpe ratio")]
    pub sharpe: Indicator,
    #[serde(rename = "Profit & loss")]
    pub pnl: f64,
    #[serde(rename = "Annualised return")]
    pub annualized_return: Indicator,
    #[serde(rename = "Annualised volatility")]
    pub annualized_volatility: Indicator,
    #[serde(rename = "Profitability ratio")]
    pub profitability_ratio: Indicator,
    #[serde(rename = "Profit and loss ratio")]
    pub pnl_ratio: Indicator,
    #[serde(rename = "Sortino ratio")]
    pub sortino: Indicator,
    #[serde(rename = "Maximum drawdown")]
    pub max_drawdown: f64,
    #[serde(rename = "Maximum drawdown duration")]
    pub max_drawdown_duration: usize,
    #[serde(rename = "Trades")]
    pub trades: usize,
}

impl PerformanceReport {
    pub const CSV_COLUMNS: [&'static str; 9] = [
        "sharpe",
        "pnl",
        "annualized_return",
        "annualized_volatility",
        "profitability_ratio",
        "pnl_ratio",
        "sortino",
        "max_drawdown",
        "max_drawdown_duration",
    ];

    pub fn csv_fields(&self) -> [String; 9] {
        [
            self.sharpe.to_string(),
            self.pnl.to_string(),
            self.annualized_return.to_string(),
            self.annualized_volatility.to_string(),
            self.profitability_ratio.to_string(),
            self.pnl_ratio.to_string(),
            self.sortino.to_string(),
            self.max_drawdown.to_string(),
            self.max_drawdown_duration.to_string(),
        ]
    }
}

/// All indicators for a value path and the positions held along it.
pub fn full_report(values: &[f64], positions: &[Position]) -> Result<PerformanceReport> {
    if values.len() != positions.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: positions.len() + 1,
            actual: values.len(),
        });
    }
    let returns = daily_returns(values)?;
    let first = values[0];
    let last = *values.last().unwrap();
    let annualized_return = if first > 0.0 && last >= 0.0 {
        Indicator::Value((last / first).powf(TRADING_DAYS_PER_YEAR / returns.len() as f64) - 1.0)
    } else {
        Indicator::Undefined
    };
    let annualized_volatility = if returns.len() >= 2 {
        Indicator::Value(TRADING_DAYS_PER_YEAR.sqrt() * sample_sd(&returns))
    } else {
        Indicator::Undefined
    };
    let trades = trade_summary(values, positions);
    let profitability_ratio = if trades.count > 0 {
        Indicator::Value(trades.winners as f64 / trades.count as f64)
    } else {
        Indicator::Undefined
    };
    let pnl_ratio = match (trades.winners, trades.losers) {
        (0, 0) => Indicator::Undefined,
        (_, 0) => Indicator::Infinite,
        (0, _) => Indicator::Value(0.0),
        (w, l) => {
            Indicator::Value((trades.gross_profit / w as f64) / (trades.gross_loss / l as f64))
        }
    };
    let (max_drawdown, max_drawdown_duration) = drawdown(values);
    Ok(PerformanceReport {
        sharpe: sharpe_ratio(&returns),
        pnl: last - first,
        annualized_return,
        annualized_volatility,
        profitability_ratio,
        pnl_ratio,
        sortino: sortino_ratio(&returns),
        max_drawdown,
        max_drawdown_duration,
        trades: trades.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action::{Long, Short};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn returns_formula() {
        assert_eq!(daily_returns(&[100_000.0, 101_000.0]).unwrap(), vec![0.01]);
        assert_eq!(daily_returns(&[5.0; 4]).unwrap(), vec![0.0; 3]);
        assert_eq!(
            daily_returns(&[100.0, 50.0, 100.0]).unwrap(),
            vec![-0.5, 1.0]
        );
        assert!(daily_returns(&[1.0]).is_err());
    }

    #[test]
    fn sharpe_worked_example() {
        let r = [0.01, -0.005, 0.02, 0.0, 0.005];
        // mean 0.006, sample sd sqrt(0.00037 / 4)
        let expected = 252f64.sqrt() * 0.006 / (0.00037f64 / 4.0).sqrt();
        let s = sharpe_ratio(&r).value().unwrap();
        assert!(close(s, expected, 1e-12));
        assert!((s - 9.90).abs() < 0.01);
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        assert_eq!(sharpe_ratio(&neg).value().unwrap(), -s);
    }

    #[test]
    fn sharpe_zero_variance_undefined() {
        assert_eq!(sharpe_ratio(&[0.01; 5]), Indicator::Undefined);
        assert_eq!(sharpe_ratio(&[0.01]), Indicator::Undefined);
    }

    #[test]
    fn sortino_cases() {
        assert_eq!(sortino_ratio(&[0.01, 0.0, 0.02]), Indicator::Undefined);
        assert_eq!(sortino_ratio(&[0.01, -0.01]), Indicator::Value(0.0));
        let r = [0.02, -0.01, 0.03, -0.02];
        let downside = ((0.0001 + 0.0004) / 2.0f64).sqrt();
        let expected = 252f64.sqrt() * 0.005 / downside;
        assert!(close(sortino_ratio(&r).value().unwrap(), expected, 1e-12));
    }

    #[test]
    fn drawdown_cases() {
        assert_eq!(drawdown(&[1.0, 2.0, 3.0]), (0.0, 0));
        assert_eq!(drawdown(&[7.0]), (0.0, 0));
        let (dd, dur) = drawdown(&[100.0, 120.0, 90.0, 110.0, 80.0]);
        assert!(close(dd, 1.0 - 80.0 / 120.0, 1e-15));
        assert_eq!(dur, 3);
    }

    #[test]
    fn single_position_is_one_trade() {
        let values = [100.0, 101.0, 103.0, 104.0];
        let r = full_report(&values, &[Long, Long, Long]).unwrap();
        assert_eq!(r.trades, 1);
        assert_eq!(r.profitability_ratio, Indicator::Value(1.0));
        assert_eq!(r.pnl_ratio, Indicator::Infinite);
        assert_eq!(r.pnl, 4.0);
    }

    #[test]
    fn hand_built_ten_step_trajectory() {
        let values = [
            100.0, 102.0, 101.0, 104.0, 103.0, 99.0, 100.0, 98.0, 101.0, 103.0, 102.0,
        ];
        let positions = [
            Long, Long, Long, Short, Short, Short, Long, Long, Short, Short,
        ];
        let r = full_report(&values, &positions).unwrap();
        // Trades: [0,3] +4, [3,6] -4, [6,8] +1, [8,10] +1.
        assert_eq!(r.trades, 4);
        assert_eq!(r.profitability_ratio, Indicator::Value(0.75));
        assert_eq!(r.pnl_ratio, Indicator::Value((6.0 / 3.0) / 4.0));
        assert_eq!(r.pnl, 2.0);
        let (dd, dur) = drawdown(&values);
        assert!(close(r.max_drawdown, (104.0 - 98.0) / 104.0, 1e-15));
        assert_eq!((dd, dur), (r.max_drawdown, 4));
        let ann = (102.0f64 / 100.0).powf(252.0 / 10.0) - 1.0;
        assert!(close(r.annualized_return.value().unwrap(), ann, 1e-12));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(full_report(&[1.0, 2.0], &[Long, Long]).is_err());
    }

    #[test]
    fn json_uses_indicator_names_and_markers() {
        let r = full_report(&[100.0, 101.0, 102.0], &[Long, Long]).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["Profit and loss ratio"], "inf");
        assert!(json["Sharpe ratio"].is_number());
        assert!(json["Sortino ratio"].is_null());
        let back: PerformanceReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
