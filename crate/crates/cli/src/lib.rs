//! Command-line runs for realisticity-optimal interpolation.
//!
//! Every command validates its whole configuration and computes all outputs
//! in memory before anything is written to disk.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_compare, cmd_interpolate, cmd_project, cmd_ri_eval, cmd_sample_prior, Artifacts};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};
