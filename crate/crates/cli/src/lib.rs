//! Command-line front end: configuration, output formats, predictions and the
//! simulation/theory comparison behind the `spc` binary.

pub mod commands;
pub mod compare;
pub mod config;
pub mod error;
pub mod output;
pub mod predict;

pub use commands::{run, Cli, Command};
pub use config::RunConfig;
pub use error::CliError;
