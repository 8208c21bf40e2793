//! Deep Q-learning for single-instrument daily trading: market data
//! preprocessing, a cost-aware trading environment with exact action bounds,
//! a from-scratch Q-network and double-DQN trainer, classical benchmark
//! strategies and a performance-assessment suite.

pub mod agent;
pub mod benchmarks;
pub mod cli;
pub mod env;
pub mod error;
pub mod market_data;
pub mod metrics;
pub mod nn;
pub mod plot;

pub use error::{Error, Result};
