//! Experiment orchestration for `landau-core`: configuration, replica
//! scheduling, versioned CSV/JSON artifacts and SVG reports.
//!
//! Every command is also callable as a function, which is how the
//! integration tests drive it.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod svg;
pub mod table;

pub use commands::Options;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
