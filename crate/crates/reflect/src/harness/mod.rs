//! Experiment harness: config schema, execution, and artifact persistence.

pub mod artifacts;
pub mod config;
pub mod figures;
pub mod runner;

pub use artifacts::{execute_config, read_summary, validate_config, BundleSummary, RunManifest};
pub use config::{ConfigError, ConfigFile, ModelConfig, RunConfig};
pub use figures::emit_reference_figures;
pub use runner::{ensemble_execute, run_experiment, CheckResult, HarnessError, RunOutput, Table};
