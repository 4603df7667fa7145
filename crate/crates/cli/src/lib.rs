//! Experiment harness behind the `wdistill` binary: flat key-value
//! configs, CSV ingestion, the experiment runners, and plot-data export.
//!
//! Exit-code contract of the binary: 0 on success, 2 on configuration
//! errors (bad keys, bad values, unknown subcommands), 1 on runtime
//! failures.

pub mod config;
pub mod experiments;
pub mod io;
pub mod plots;

use thiserror::Error;

/// Configuration-phase error; the binary maps it to exit code 2.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}
