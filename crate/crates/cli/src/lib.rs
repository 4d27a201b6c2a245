//! Experiment orchestration for the crossbar PUF simulator: configuration
//! loading, the stock experiment protocols, and deterministic artifact
//! persistence. The `nlpuf` binary is a thin front end over this library.

pub mod config;
pub mod experiments;
pub mod manifest;

pub use config::{load_config, ConfigError, ExperimentConfig};
pub use experiments::{run_experiment, ExperimentName};
pub use manifest::{write_report, ArtifactSet, Manifest};
