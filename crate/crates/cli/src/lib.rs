//! Configuration, orchestration and file output for the `blowup` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{build_config, parse_config, Command, ConfigError, RunConfig};
pub use run::{run, EXIT_INVALID, EXIT_OK, EXIT_SOLVER, EXIT_TRAP};
