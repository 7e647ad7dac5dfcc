//! Config parsing and subcommand dispatch behind the `slil` binary.

pub mod commands;
pub mod config;

pub use commands::{execute, run, validate, CliError, Command, Outcome};
pub use config::{normalize, parse_config, ConfigError, ConfigErrors, ExperimentConfig};
