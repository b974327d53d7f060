//! Deep Q-network portfolio manager for minute-level crypto markets.
//!
//! The crate covers the whole pipeline: kline ingestion and alignment
//! ([`market_data`]), sliding-window state construction ([`preprocessing`]),
//! the trading environment ([`environment`]), a hand-written 3-d
//! convolutional Q-network ([`qnet`]), the DQN agent with a
//! temperature-normalized expected-SARSA target ([`agent`]), classical
//! online-portfolio baselines ([`baselines`]), and risk metrics plus the
//! grid-search harness ([`evaluation`]).

pub mod agent;
pub mod baselines;
pub mod config;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod market_data;
pub mod preprocessing;
pub mod qnet;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
