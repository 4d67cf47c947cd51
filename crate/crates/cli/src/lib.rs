//! Experiment orchestration for `homlab`: JSON configs, the cached
//! field -> corrector -> halfspace -> excess pipeline, CSV outputs and the
//! JSON report.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod stages;
pub mod table;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use pipeline::{run_pipeline, RunManifest};
pub use report::report;
