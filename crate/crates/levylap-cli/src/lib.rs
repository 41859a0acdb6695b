//! Library surface of the `levylap` CLI: configuration, suite dispatch and
//! report emission, separated from the binary for direct testing.

pub mod config;
pub mod report;
pub mod suites;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use report::{Check, Report, SeriesBlock, SeriesRow, Verdict};
pub use suites::run;

/// Exit code for configuration errors (EX_USAGE).
pub const EXIT_CONFIG: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error at {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("suite {suite} failed: {message}")]
    Suite { suite: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => 1,
        }
    }
}
