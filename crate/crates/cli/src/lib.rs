//! File formats, validation, and command dispatch for the `apportion` CLI.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad flags, malformed
//! or inconsistent input files), 3 on numerical failures (rank deficiency,
//! singular covariances).

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;

pub use commands::{run, Cli};
pub use error::CliError;
