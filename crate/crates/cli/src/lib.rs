//! Experiment runner behind the `abn` binary.

pub mod commands;
pub mod error;
pub mod image;
pub mod manifest;

pub use commands::{run, Cli, Command, Outcome};
pub use error::{CliError, Result};
