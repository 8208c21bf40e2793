use proptest::prelude::*;

use tdqn::env::{
    cash_after_trade, feasible_range, q_long, q_short, run_trajectory, step, Action, AgentState,
    Decision, EnvConfig, TradingEnv,
};
use tdqn::market_data::synthetic::{bars_from_closes, random_walk_closes};
use tdqn::market_data::FeatureConfig;

fn config(cost_rate: f64, epsilon_bound: f64) -> EnvConfig {
    EnvConfig {
        cost_rate,
        epsilon_bound,
        features: FeatureConfig {
            tau: 5,
            filter_window: 2,
        },
        ..EnvConfig::default()
    }
}

fn state(cash: f64, shares: i64, last: Option<Action>) -> AgentState {
    AgentState {
        cash,
        shares,
        position: last.unwrap_or(Action::Long),
        last_action: last,
        value: cash,
    }
}

fn last_action() -> impl Strategy<Value = Option<Action>> {
    prop_oneof![
        Just(None),
        Just(Some(Action::Long)),
        Just(Some(Action::Short))
    ]
}

proptest! {
    #[test]
    fn reduced_actions_are_feasible(
        cash in 0.0..1e5f64,
        magnitude in 0i64..500,
        price in 1.0..500.0f64,
        c in 0.0..0.02f64,
        eps in 0.01..0.5f64,
        last in last_action(),
    ) {
        let cfg = config(c, eps);
        let shares = match last {
            None => 0,
            Some(Action::Long) => magnitude,
            Some(Action::Short) => -magnitude,
        };
        let s = state(cash, shares, last);
        let (lo, hi) = feasible_range(&s, price, &cfg);
        prop_assume!(lo <= hi);
        for q in [q_long(&s, price, last, &cfg), q_short(&s, price, last, &cfg)] {
            prop_assert!(lo <= q && q <= hi, "{q} outside [{lo}, {hi}]");
            prop_assert!(cash_after_trade(cash, q, price, c) >= 0.0);
        }
    }

    #[test]
    fn repeating_an_action_trades_nothing(cash in 0.0..1e5f64, shares in 0i64..500, price in 1.0..500.0f64) {
        let cfg = config(0.001, 0.1);
        prop_assert_eq!(q_long(&state(cash, shares, Some(Action::Long)), price, Some(Action::Long), &cfg), 0);
    }

    #[test]
    fn reward_is_relative_value_change(
        cash in 1.0..1e5f64,
        price in 1.0..500.0f64,
        moved in -0.09..0.09f64,
        long in prop::bool::ANY,
    ) {
        let cfg = config(0.001, 0.1);
        let s = AgentState::initial(cash);
        let action = if long { Action::Long } else { Action::Short };
        let next = price * (1.0 + moved);
        let out = step(&s, action, price, next, &cfg).unwrap();
        let after = out.state.cash + out.state.shares as f64 * next;
        prop_assert!((out.reward - (after - cash) / cash).abs() <= 1e-12);
        prop_assert!(!out.move_breach);
    }

    #[test]
    fn random_episodes_keep_constraints(seed in 0u64..10_000, c in 0.0..0.01f64, eps in 0.08..0.3f64, switch in 0.0..1.0f64) {
        let series = bars_from_closes("RW", &random_walk_closes(120, 0.02, seed));
        let cfg = config(c, eps);
        let mut env = TradingEnv::from_series(&series, cfg).unwrap();
        let mut k = 0u64;
        let mut policy = |d: &Decision<'_>| {
            k += 1;
            if (k.wrapping_mul(2654435761) % 1000) as f64 / 1000.0 < switch { d.position.opposite() } else { d.position }
        };
        let out = run_trajectory(&mut env, &mut policy, true).unwrap();
        let mirrored = out.mirrored.unwrap();
        prop_assert_eq!(mirrored.len(), out.trajectory.steps.len());
        for (s, m) in out.trajectory.steps.iter().zip(&mirrored) {
            prop_assert_eq!(s.before, m.before);
            prop_assert_eq!(s.action, m.action.opposite());
            for r in [s, m] {
                prop_assert!(r.after.cash >= 0.0);
                prop_assert!(r.after.cash >= -(r.after.shares as f64) * r.price * ((1.0 + eps) * (1.0 + c)));
            }
        }
        let values = out.trajectory.values();
        for (w, s) in values.windows(2).zip(&out.trajectory.steps) {
            prop_assert!((w[1] - w[0] * (1.0 + s.reward)).abs() <= 1e-9 * w[0].abs().max(1.0));
        }
    }
}

#[test]
fn first_short_from_cash_mirrors_the_long() {
    let cfg = config(0.0, 0.1);
    let s = AgentState::initial(10_000.0);
    let long = q_long(&s, 100.0, None, &cfg);
    let short = q_short(&s, 100.0, None, &cfg);
    assert_eq!(long, 100);
    assert_eq!(short, -100);
}
