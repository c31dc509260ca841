//! Experiment harness: configuration, data loading, seeded runs and reports.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod generate;
pub mod report;

pub use config::{load_config, load_config_with, ExperimentConfig, LoadedConfig};
pub use data::Dataset;
pub use error::{HarnessError, Result};
