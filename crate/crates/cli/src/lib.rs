//! Command-line front end: CSV ingestion, TOML configuration, fit and
//! simulation reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
