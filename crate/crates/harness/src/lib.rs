//! Configuration, Monte-Carlo orchestration and result files for the
//! `spde` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod plot;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
