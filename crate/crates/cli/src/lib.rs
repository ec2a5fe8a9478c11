//! Library half of the `treeslice` command: config loading, command execution, CSV
//! output, the runtime bench and the self-test suites.

pub mod bench;
pub mod config;
pub mod output;
pub mod run;
pub mod selftest;

pub use config::{load, parse, ConfigError, ExperimentConfig, LoadedConfig};
pub use run::{execute, Overrides, RunError, RunSummary};
