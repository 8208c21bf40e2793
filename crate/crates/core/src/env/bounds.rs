//! Closed-form bounds of the feasible integer action set and the two
//! reduced actions built on them.

use super::{Action, AgentState, EnvConfig};

/// Cash after trading `quantity` shares at `price`, costs withdrawn from cash.
pub fn cash_after_trade(cash: f64, quantity: i64, price: f64, cost_rate: f64) -> f64 {
    let q = quantity as f64;
    cash - q * price - cost_rate * q.abs() * price
}

/// Whether `cash` covers buying back `shares` (if negative) at a price moved
/// up by the full epsilon bound, costs included.
pub fn repayable(cash: f64, shares: i64, price: f64, config: &EnvConfig) -> bool {
    cash >= -(shares as f64) * price * config.buyback_factor()
}

/// Largest real quantity that keeps cash non-negative.
pub fn action_upper_bound(state: &AgentState, price: f64, config: &EnvConfig) -> f64 {
    state.cash / (price * (1.0 + config.cost_rate))
}

/// `-cash - n p (1 + epsilon)(1 + C)`: the shortfall, at the worst assumed
/// next price, of closing the position without trading now.
pub fn lower_bound_delta(state: &AgentState, price: f64, config: &EnvConfig) -> f64 {
    -state.cash - state.shares as f64 * price * config.buyback_factor()
}

/// Smallest real quantity that keeps the position repayable at the worst
/// assumed next price.
pub fn action_lower_bound(state: &AgentState, price: f64, config: &EnvConfig) -> f64 {
    let delta = lower_bound_delta(state, price, config);
    let c = config.cost_rate;
    let eps = config.epsilon_bound;
    if delta >= 0.0 {
        delta / (price * eps * (1.0 + c))
    } else {
        delta / (price * (2.0 * c + eps * (1.0 + c)))
    }
}

/// Integer bounds `[ceil(lower), floor(upper)]`, nudged by one where float
/// rounding of the closed form lands on the wrong side of a constraint as
/// evaluated by the cash update itself. Empty when `lo > hi`.
pub fn feasible_range(state: &AgentState, price: f64, config: &EnvConfig) -> (i64, i64) {
    let mut hi = action_upper_bound(state, price, config).floor() as i64;
    while cash_after_trade(state.cash, hi, price, config.cost_rate) < 0.0 {
        hi -= 1;
    }
    let mut lo = action_lower_bound(state, price, config).ceil() as i64;
    let ok = |q: i64| {
        let cash = cash_after_trade(state.cash, q, price, config.cost_rate);
        repayable(cash, state.shares + q, price, config)
    };
    while !ok(lo) {
        lo += 1;
    }
    while ok(lo - 1) {
        lo -= 1;
    }
    (lo, hi)
}

/// Buys as many shares as cash allows, unless already long.
pub fn q_long(state: &AgentState, price: f64, previous: Option<Action>, config: &EnvConfig) -> i64 {
    if previous == Some(Action::Long) {
        return 0;
    }
    let (_, hi) = feasible_range(state, price, config);
    hi.max(0)
}

/// Sells into a short position mirroring the long one, unless already short.
/// Clamped from below by the repayability bound, so a short that the price
/// has moved against is partially bought back.
pub fn q_short(
    state: &AgentState,
    price: f64,
    previous: Option<Action>,
    config: &EnvConfig,
) -> i64 {
    let (lo, hi) = feasible_range(state, price, config);
    let candidate = if previous == Some(Action::Short) {
        0
    } else {
        -2 * state.shares - hi.max(0)
    };
    // lo > hi only after a price move beyond the epsilon bound; cash
    // non-negativity then takes precedence.
    candidate.max(lo).min(hi)
}
