//! Batch experiment runner for partial-boundary EIT.
//!
//! A run is driven by one TOML configuration file and proceeds in four
//! stages that communicate only through files in the run directory:
//! `simulate`, `complete`, `reconstruct` and `evaluate`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod image;
pub mod manifest;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use stages::Run;
