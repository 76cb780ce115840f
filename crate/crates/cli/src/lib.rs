//! Command implementations behind the `tvgraph` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod lab;

pub use error::CliError;
