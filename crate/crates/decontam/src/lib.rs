//! File formats, configuration, parallel execution and commands on top of
//! `decontam-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;

pub use error::{CliError, CliResult};
