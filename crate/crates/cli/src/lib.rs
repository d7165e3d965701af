//! Command line and HTTP front end over `compdeg-core`.

pub mod args;
pub mod commands;
pub mod error;
pub mod service;

pub use error::{CliError, CliResult, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
