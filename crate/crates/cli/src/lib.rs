//! Command-line driver for `tumorctl-core`: TOML run configs, snapshot and
//! history formats, the homogeneous ODE oracle and the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod oracle;

pub use commands::{run, run_path, Command, Options, Outcome};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
