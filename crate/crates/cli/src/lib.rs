//! File formats and subcommands behind the `spacetime` binary.

pub mod commands;
pub mod error;
pub mod files;

pub use error::{CliError, CliResult};
