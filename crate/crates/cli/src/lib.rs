//! Experiment driver: run matrices, fixture verification, CSV tables and
//! SVG plots.

pub mod config;
pub mod error;
pub mod experiment;
pub mod gen;
pub mod plot;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
