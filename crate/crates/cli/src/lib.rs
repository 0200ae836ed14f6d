//! Experiment runner for EvoSearch and its baselines: TOML configs, CSV
//! event logs, summaries and SVG plots.

pub mod config;
pub mod error;
pub mod io;
pub mod plot;
pub mod runner;

pub use config::{ExperimentConfig, Method, Resolved};
pub use error::{CliError, CliResult};
pub use runner::{compare, run, sweep, RunOptions};
