//! C ABI over the trading environment, action bounds, performance metrics,
//! benchmark strategies and trained-model inference.
//!
//! Every fallible function returns a [`TdqnStatus`]; on failure the message
//! is available from [`tdqn_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use tdqn::agent::{greedy, TrainedModel};
use tdqn::benchmarks::{run_benchmark, StrategyKind, StrategySpec};
use tdqn::env::{feasible_range, Action, AgentState, EnvConfig, TradingEnv};
use tdqn::market_data::{preprocess, FeatureConfig, FeatureTable, OhlcvSeries, Segment};
use tdqn::metrics::{full_report, Indicator, PerformanceReport};
use tdqn::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdqnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Constraint = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdqnAction {
    Short = 0,
    Long = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdqnStrategy {
    BuyHold = 0,
    SellHold = 1,
    TrendFollowing = 2,
    MeanReversion = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdqnEnvConfig {
    pub cost_rate: f64,
    pub epsilon_bound: f64,
    pub initial_cash: f64,
    /// Observation window length in bars.
    pub tau: u32,
    pub filter_window: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdqnStep {
    pub quantity: i64,
    pub reward: f64,
    pub cash: f64,
    pub shares: i64,
    pub value: f64,
    pub done: bool,
}

/// Indicators are NaN when undefined and +infinity when unbounded.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdqnReport {
    pub sharpe: f64,
    pub pnl: f64,
    pub annualized_return: f64,
    pub annualized_volatility: f64,
    pub profitability_ratio: f64,
    pub pnl_ratio: f64,
    pub sortino: f64,
    pub max_drawdown: f64,
    pub max_drawdown_duration: u64,
    pub trades: u64,
}

pub struct TdqnSeries(OhlcvSeries);

pub struct TdqnEnv(TradingEnv);

pub struct TdqnModel(TrainedModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &Error) -> TdqnStatus {
    match e {
        Error::Io { .. } | Error::Http { .. } => TdqnStatus::Io,
        Error::MalformedRow { .. } | Error::Json(_) | Error::Csv(_) | Error::Checkpoint(_) => {
            TdqnStatus::Parse
        }
        Error::Constraint(_) => TdqnStatus::Constraint,
        _ => TdqnStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TdqnStatus, String)>) -> TdqnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TdqnStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside tdqn");
            TdqnStatus::Panic
        }
    }
}

fn lib<T>(r: tdqn::Result<T>) -> Result<T, (TdqnStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (TdqnStatus, String) {
    (TdqnStatus::NullPointer, format!("{name} is null"))
}

fn invalid(message: impl Into<String>) -> (TdqnStatus, String) {
    (TdqnStatus::InvalidArgument, message.into())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (TdqnStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(
    p: *const T,
    len: usize,
    name: &str,
) -> Result<&'a [T], (TdqnStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (TdqnStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, (TdqnStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

impl From<TdqnEnvConfig> for EnvConfig {
    fn from(c: TdqnEnvConfig) -> Self {
        EnvConfig {
            cost_rate: c.cost_rate,
            epsilon_bound: c.epsilon_bound,
            initial_cash: c.initial_cash,
            features: FeatureConfig {
                tau: c.tau as usize,
                filter_window: c.filter_window as usize,
            },
        }
    }
}

fn indicator(i: Indicator) -> f64 {
    match i {
        Indicator::Value(v) => v,
        Indicator::Infinite => f64::INFINITY,
        Indicator::Undefined => f64::NAN,
    }
}

impl From<&PerformanceReport> for TdqnReport {
    fn from(r: &PerformanceReport) -> Self {
        TdqnReport {
            sharpe: indicator(r.sharpe),
            pnl: r.pnl,
            annualized_return: indicator(r.annualized_return),
            annualized_volatility: indicator(r.annualized_volatility),
            profitability_ratio: indicator(r.profitability_ratio),
            pnl_ratio: indicator(r.pnl_ratio),
            sortino: indicator(r.sortino),
            max_drawdown: r.max_drawdown,
            max_drawdown_duration: r.max_drawdown_duration as u64,
            trades: r.trades as u64,
        }
    }
}

fn action(a: TdqnAction) -> Action {
    match a {
        TdqnAction::Short => Action::Short,
        TdqnAction::Long => Action::Long,
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn tdqn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tdqn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn tdqn_env_config_default() -> TdqnEnvConfig {
    let d = EnvConfig::default();
    TdqnEnvConfig {
        cost_rate: d.cost_rate,
        epsilon_bound: d.epsilon_bound,
        initial_cash: d.initial_cash,
        tau: d.features.tau as u32,
        filter_window: d.features.filter_window as u32,
    }
}

/// Reads a `date,open,high,low,close,volume` CSV file.
///
/// # Safety
/// `path` and `instrument` must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_series_from_csv(
    path: *const c_char,
    instrument: *const c_char,
    out: *mut *mut TdqnSeries,
) -> TdqnStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let instrument = str_arg(instrument, "instrument")?;
        let out = out_arg(out, "out")?;
        let file =
            std::fs::File::open(path).map_err(|e| (TdqnStatus::Io, format!("{path}: {e}")))?;
        let series = lib(OhlcvSeries::read_csv(instrument, file))?;
        *out = Box::into_raw(Box::new(TdqnSeries(series)));
        Ok(())
    })
}

/// Daily bars built from closing prices alone on a weekday calendar.
///
/// # Safety
/// `closes` must point to `len` doubles; `instrument` must be NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_series_from_closes(
    instrument: *const c_char,
    closes: *const f64,
    len: usize,
    out: *mut *mut TdqnSeries,
) -> TdqnStatus {
    guard(|| {
        let instrument = str_arg(instrument, "instrument")?;
        let closes = slice_arg(closes, len, "closes")?;
        let out = out_arg(out, "out")?;
        if closes.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(invalid("closes must be positive and finite"));
        }
        let series = tdqn::market_data::synthetic::bars_from_closes(instrument, closes);
        *out = Box::into_raw(Box::new(TdqnSeries(series)));
        Ok(())
    })
}

/// Number of bars; 0 for a null handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdqn_series_len(series: *const TdqnSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tdqn_series_free(series: *mut TdqnSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Environment over the whole series, features normalized with the series'
/// own statistics. Trading starts at the first bar with a full window.
///
/// # Safety
/// `series` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_env_new(
    series: *const TdqnSeries,
    config: *const TdqnEnvConfig,
    out: *mut *mut TdqnEnv,
) -> TdqnStatus {
    guard(|| {
        let series = ref_arg(series, "series")?;
        let config: EnvConfig = (*ref_arg(config, "config")?).into();
        let out = out_arg(out, "out")?;
        lib(config.validate())?;
        let env = lib(TradingEnv::from_series(&series.0, config))?;
        *out = Box::into_raw(Box::new(TdqnEnv(env)));
        Ok(())
    })
}

/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdqn_env_reset(env: *mut TdqnEnv) -> TdqnStatus {
    guard(|| {
        out_arg(env, "env")?.0.reset();
        Ok(())
    })
}

/// Trades at the current close and advances one bar.
///
/// # Safety
/// `env` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_env_step(
    env: *mut TdqnEnv,
    action_taken: TdqnAction,
    out: *mut TdqnStep,
) -> TdqnStatus {
    guard(|| {
        let env = &mut out_arg(env, "env")?.0;
        let out = out_arg(out, "out")?;
        if env.done() {
            return Err(invalid("episode is over; reset the environment"));
        }
        let s = lib(env.step(action(action_taken)))?;
        *out = TdqnStep {
            quantity: s.quantity,
            reward: s.reward,
            cash: s.after.cash,
            shares: s.after.shares,
            value: s.after.value,
            done: env.done(),
        };
        Ok(())
    })
}

/// True when no step remains, or for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdqn_env_done(env: *const TdqnEnv) -> bool {
    env.as_ref().is_none_or(|e| e.0.done())
}

/// Length of the network input for this environment's feature settings.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdqn_env_input_dim(env: *const TdqnEnv) -> usize {
    env.as_ref().map_or(0, |e| e.0.features().input_dim())
}

/// Writes the current observation, flattened as the network expects it.
///
/// # Safety
/// `env` must be a live handle; `buffer` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tdqn_env_observation(
    env: *const TdqnEnv,
    buffer: *mut f64,
    len: usize,
) -> TdqnStatus {
    guard(|| {
        let env = &ref_arg(env, "env")?.0;
        let dim = env.features().input_dim();
        if len != dim {
            return Err(invalid(format!(
                "buffer holds {len} values, observation has {dim}"
            )));
        }
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let out = std::slice::from_raw_parts_mut(buffer, len);
        lib(env.decision().write_input(out))
    })
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tdqn_env_free(env: *mut TdqnEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Integer bounds of the feasible trade quantity; `*lo > *hi` when empty.
///
/// # Safety
/// `config`, `lo` and `hi` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tdqn_feasible_range(
    cash: f64,
    shares: i64,
    price: f64,
    config: *const TdqnEnvConfig,
    lo: *mut i64,
    hi: *mut i64,
) -> TdqnStatus {
    guard(|| {
        let config: EnvConfig = (*ref_arg(config, "config")?).into();
        let lo = out_arg(lo, "lo")?;
        let hi = out_arg(hi, "hi")?;
        lib(config.validate())?;
        if !(price > 0.0 && price.is_finite() && cash.is_finite()) {
            return Err(invalid("price must be positive and cash finite"));
        }
        let state = AgentState {
            cash,
            shares,
            position: if shares < 0 {
                Action::Short
            } else {
                Action::Long
            },
            last_action: None,
            value: cash,
        };
        (*lo, *hi) = feasible_range(&state, price, &config);
        Ok(())
    })
}

/// Indicators of a portfolio value path; `positions` has `len - 1` entries,
/// position `k` held from value `k` to value `k + 1`.
///
/// # Safety
/// `values` must hold `len` doubles, `positions` `len - 1` actions; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_performance(
    values: *const f64,
    positions: *const TdqnAction,
    len: usize,
    out: *mut TdqnReport,
) -> TdqnStatus {
    guard(|| {
        if len < 2 {
            return Err(invalid("need at least two values"));
        }
        let values = slice_arg(values, len, "values")?;
        let positions: Vec<Action> = slice_arg(positions, len - 1, "positions")?
            .iter()
            .map(|a| action(*a))
            .collect();
        let out = out_arg(out, "out")?;
        let report = lib(full_report(values, &positions))?;
        *out = TdqnReport::from(&report);
        Ok(())
    })
}

/// Runs a benchmark strategy over the series from its first full window.
///
/// # Safety
/// `series` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_benchmark(
    series: *const TdqnSeries,
    strategy: TdqnStrategy,
    short_window: u32,
    long_window: u32,
    config: *const TdqnEnvConfig,
    out: *mut TdqnReport,
) -> TdqnStatus {
    guard(|| {
        let series = ref_arg(series, "series")?;
        let config: EnvConfig = (*ref_arg(config, "config")?).into();
        let out = out_arg(out, "out")?;
        lib(config.validate())?;
        let kind = match strategy {
            TdqnStrategy::BuyHold => StrategyKind::BuyHold,
            TdqnStrategy::SellHold => StrategyKind::SellHold,
            TdqnStrategy::TrendFollowing => StrategyKind::TrendFollowing,
            TdqnStrategy::MeanReversion => StrategyKind::MeanReversion,
        };
        let spec = StrategySpec {
            kind,
            short_window: short_window as usize,
            long_window: long_window as usize,
        };
        let e = lib(run_benchmark(
            &spec,
            &Segment::whole(series.0.clone()),
            &config,
        ))?;
        *out = TdqnReport::from(&e.report);
        Ok(())
    })
}

/// Loads a model file written by the `train` command.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_model_load(
    path: *const c_char,
    out: *mut *mut TdqnModel,
) -> TdqnStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let text = std::fs::read_to_string(Path::new(path))
            .map_err(|e| (TdqnStatus::Io, format!("{path}: {e}")))?;
        let model: TrainedModel =
            serde_json::from_str(&text).map_err(|e| (TdqnStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(TdqnModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdqn_model_input_dim(model: *const TdqnModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.input_dim())
}

/// Greedy action and both Q-values for one network input.
///
/// # Safety
/// `model` must be a live handle; `input` must hold `len` doubles;
/// `q_values` must be null or hold 2 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_model_act(
    model: *const TdqnModel,
    input: *const f64,
    len: usize,
    q_values: *mut f64,
    out: *mut TdqnAction,
) -> TdqnStatus {
    guard(|| {
        let model = &ref_arg(model, "model")?.0;
        let input = slice_arg(input, len, "input")?;
        let out = out_arg(out, "out")?;
        if len != model.input_dim() {
            return Err(invalid(format!(
                "input has {len} values, model expects {}",
                model.input_dim()
            )));
        }
        let x =
            ndarray::ArrayView2::from_shape((1, len), input).map_err(|e| invalid(e.to_string()))?;
        let q = lib(model.params.predict(x))?;
        let q = [q[[0, 0]], q[[0, 1]]];
        if !q_values.is_null() {
            std::slice::from_raw_parts_mut(q_values, 2).copy_from_slice(&q);
        }
        *out = match greedy(q) {
            Action::Short => TdqnAction::Short,
            Action::Long => TdqnAction::Long,
        };
        Ok(())
    })
}

/// Environment whose observations are normalized with `model`'s own
/// statistics and feature settings, ready for [`tdqn_model_act`].
///
/// # Safety
/// `series`, `model` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdqn_env_new_for_model(
    series: *const TdqnSeries,
    model: *const TdqnModel,
    config: *const TdqnEnvConfig,
    out: *mut *mut TdqnEnv,
) -> TdqnStatus {
    guard(|| {
        let series = ref_arg(series, "series")?;
        let model = &ref_arg(model, "model")?.0;
        let mut config: EnvConfig = (*ref_arg(config, "config")?).into();
        let out = out_arg(out, "out")?;
        config.features = model.features;
        lib(config.validate())?;
        let table: FeatureTable = lib(preprocess(&series.0, model.features, Some(&model.stats)))?;
        let env = lib(TradingEnv::new(
            Arc::new(series.0.clone()),
            Arc::new(table),
            config,
            0,
        ))?;
        *out = Box::into_raw(Box::new(TdqnEnv(env)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tdqn_model_free(model: *mut TdqnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
