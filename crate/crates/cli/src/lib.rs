//! Experiment orchestration for the fairness-weighted federated simulator:
//! config parsing and validation, sweep execution with per-run output
//! directories, and cross-run report aggregation.

pub mod config;
pub mod output;
pub mod report;
pub mod runner;
