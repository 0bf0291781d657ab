//! Experiment orchestration for speaker-invariant clustering: TOML run
//! configs, the train-then-evaluate pipeline, sweeps over codebook size,
//! SVG plots and comparison reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod plot;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use run::{run_experiment, run_experiment_file, RunMetrics, RunOutcome};
