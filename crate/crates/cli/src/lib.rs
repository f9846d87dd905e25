//! Command-line driver: run configuration, the pipeline commands and the
//! channel-allocation trend report.

pub mod commands;
pub mod config;
pub mod error;
pub mod trends;

pub use config::RunConfig;
pub use error::CliError;
