//! Command-line front end for eulerlab: classification, integration, field
//! sampling, residual verification and parameter sweeps.
//!
//! Exit codes: 0 success, 1 verification threshold exceeded, 2 configuration
//! error, 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use thiserror::Error;

pub mod config;
pub mod output;
pub mod run;

pub use config::{CommandKind, Format, Job, RangeSpec, RunConfig};
pub use run::{execute, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}
