//! Monte Carlo harness and command-line front end.

pub mod cli;
pub mod config;
pub mod output;
pub mod runner;

pub use config::{Case, ExperimentConfig, GridConfig, PulseConfig, DEFAULT_CONFIG_TOML};
pub use output::{emit_csv, parse_csv, CSV_HEADER};
pub use runner::{draw_trial, estimator_config, run_case, run_case_with, MetricRecord, Trial, Workspace};
