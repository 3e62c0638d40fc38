//! Command-line front end for the learnable multistep samplers in
//! `gasolve-core`: configuration, dataset and checkpoint files, CSV reports
//! and the subcommands built on them.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;

pub use error::{CliError, Result};
