//! Batch front end for the pursuit simulator: training runs, checkpoint
//! evaluation sweeps, trajectory rendering and multi-method comparisons.

pub mod commands;
pub mod config;
pub mod error;

pub use error::CliError;
