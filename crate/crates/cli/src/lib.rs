//! Command-line front end for the `orderprobe` library.

pub mod args;
pub mod commands;
pub mod error;
pub mod pipeline;

pub use error::{CliError, EXIT_COVERAGE, EXIT_INVALID, EXIT_IO, EXIT_MISSING};
pub use pipeline::{cmd_pipeline, cmd_score, RunConfig, RunSummary, ScoreConfig, ScoreRow};
