//! Experiment runner for the wavephase library: JSON configs in, CSV, JSON and
//! SVG results out.

pub mod config;
pub mod error;
pub mod io;
pub mod plot;
pub mod runner;

pub use config::{parse_config, ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use runner::run_experiment;
