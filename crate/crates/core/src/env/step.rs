use serde::{Deserialize, Serialize};

use super::bounds::{cash_after_trade, feasible_range, q_long, q_short, repayable};
use super::{Action, AgentState, EnvConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// State after trading at `price_now`, valued at `price_next`.
    pub state: AgentState,
    /// Signed number of shares traded.
    pub quantity: i64,
    /// Relative change of portfolio value over the step.
    pub reward: f64,
    /// Portfolio value at `price_now` before trading.
    pub value_before: f64,
    /// The realized move exceeded the epsilon bound.
    pub move_breach: bool,
    /// The pre-state admitted no feasible integer action (a consequence of an
    /// earlier breach); constraints were enforced on a best-effort basis.
    pub infeasible: bool,
}

/// Trades at the close of day t and values the portfolio at the close of day t+1.
pub fn step(
    state: &AgentState,
    action: Action,
    price_now: f64,
    price_next: f64,
    config: &EnvConfig,
) -> Result<StepOutcome> {
    if !(price_now > 0.0 && price_next > 0.0) {
        return Err(Error::Config(format!(
            "prices must be positive, got {price_now} and {price_next}"
        )));
    }
    let (lo, hi) = feasible_range(state, price_now, config);
    let infeasible = lo > hi;
    let quantity = match action {
        Action::Long => q_long(state, price_now, state.last_action, config),
        Action::Short => q_short(state, price_now, state.last_action, config),
    };
    let cash = cash_after_trade(state.cash, quantity, price_now, config.cost_rate);
    let shares = state.shares + quantity;

    if cash < 0.0 {
        return Err(Error::Constraint(format!(
            "cash {cash} < 0 after trading {quantity} at {price_now}"
        )));
    }
    if !infeasible && !repayable(cash, shares, price_now, config) {
        return Err(Error::Constraint(format!(
            "cash {cash} cannot repay {shares} shares at {price_now} under the move bound"
        )));
    }

    let value_before = state.value_at(price_now);
    let value_after = cash + shares as f64 * price_next;
    let reward = if value_before > 0.0 {
        (value_after - value_before) / value_before
    } else {
        0.0
    };
    let move_breach = ((price_next - price_now) / price_now).abs() > config.epsilon_bound;

    Ok(StepOutcome {
        state: AgentState {
            cash,
            shares,
            position: action,
            last_action: Some(action),
            value: value_after,
        },
        quantity,
        reward,
        value_before,
        move_breach,
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::FeatureConfig;

    fn cfg(c: f64) -> EnvConfig {
        EnvConfig {
            cost_rate: c,
            epsilon_bound: 0.1,
            initial_cash: 100_000.0,
            features: FeatureConfig::default(),
        }
    }

    #[test]
    fn first_long_trade_hand_arithmetic() {
        let c = cfg(0.001);
        let s = AgentState::initial(100_000.0);
        let out = step(&s, Action::Long, 100.0, 101.0, &c).unwrap();
        assert_eq!(out.quantity, 999);
        // 100000 - 99900 - 99.9
        assert!((out.state.cash - 0.1).abs() < 1e-9);
        assert!((out.state.value - 100_899.1).abs() < 1e-9);
        assert!((out.reward - 0.008_991).abs() < 1e-9);
        assert_eq!(out.state.position, Action::Long);
    }

    #[test]
    fn hold_step_reward_is_position_scaled_move() {
        let c = cfg(0.001);
        let s0 = AgentState::initial(100_000.0);
        let s1 = step(&s0, Action::Long, 100.0, 101.0, &c).unwrap().state;
        let out = step(&s1, Action::Long, 101.0, 99.0, &c).unwrap();
        assert_eq!(out.quantity, 0);
        assert_eq!(out.state.cash, s1.cash);
        let v = s1.value_at(101.0);
        let expected = s1.shares as f64 * (99.0 - 101.0) / v;
        assert!((out.reward - expected).abs() < 1e-15);
    }

    #[test]
    fn costs_strictly_lower_the_reward() {
        let s = AgentState::initial(100_000.0);
        let free = step(&s, Action::Long, 100.0, 101.0, &cfg(0.0)).unwrap();
        let costly = step(&s, Action::Long, 100.0, 101.0, &cfg(0.001)).unwrap();
        assert!(costly.reward < free.reward);
    }

    #[test]
    fn costless_hold_conserves_value() {
        let c = cfg(0.0);
        let s0 = AgentState::initial(10_000.0);
        let s1 = step(&s0, Action::Short, 50.0, 52.0, &c).unwrap().state;
        let out = step(&s1, Action::Short, 52.0, 51.0, &c).unwrap();
        let before = s1.value_at(52.0);
        assert!((out.state.value - before - s1.shares as f64 * (51.0 - 52.0)).abs() < 1e-9);
    }

    #[test]
    fn breach_is_flagged_not_fatal() {
        let c = cfg(0.001);
        let s = AgentState::initial(100_000.0);
        let out = step(&s, Action::Short, 100.0, 130.0, &c).unwrap();
        assert!(out.move_breach);
    }

    #[test]
    fn zero_cash_agent_is_inactive() {
        let c = cfg(0.001);
        let s = AgentState {
            cash: 0.0,
            ..AgentState::initial(0.0)
        };
        let out = step(&s, Action::Long, 100.0, 105.0, &c).unwrap();
        assert_eq!(out.quantity, 0);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn non_positive_price_rejected() {
        let s = AgentState::initial(1.0);
        assert!(step(&s, Action::Long, 0.0, 1.0, &cfg(0.0)).is_err());
    }
}
