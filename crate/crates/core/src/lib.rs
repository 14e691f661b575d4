//! Portfolio research library for market-cap transform-ladder weighting.
//!
//! The library is organized around a daily security panel ([`marketdata`]),
//! a family of capitalization transforms that turn caps into portfolio
//! weights ([`weighting`]), a share-level backtest engine with CPI-deflated
//! trading costs ([`backtest`]), return and tail-risk statistics
//! ([`metrics`]), and a randomized-membership bootstrap over the same panel
//! ([`bootstrap`]).

pub mod backtest;
pub mod bootstrap;
pub mod error;
pub mod marketdata;
pub mod metrics;
pub mod weighting;

pub use error::{Error, Result};
