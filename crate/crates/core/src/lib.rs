//! Batch analytics for cyclic-arbitrage bot activity on EVM chains.
//!
//! The pipeline runs in stages: [`ingest`] loads chain-data exports,
//! [`detector`] finds candidate bot contracts from swap logs, [`validator`]
//! screens the candidates, [`classifier`] labels every transaction,
//! [`metrics`] aggregates daily measurements, [`similarity`] compares bot
//! bytecode and [`stats`] fits the daily regressions.

pub mod types;
pub mod ingest;
pub mod rank;
pub mod detector;
pub mod validator;
pub mod classifier;
pub mod metrics;
pub mod similarity;
pub mod stats;
pub mod config;
pub mod pipeline;
pub mod fixture;
