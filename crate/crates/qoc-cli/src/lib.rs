//! Batch driver for the qoc solver: strict run configurations, parameter
//! sweeps with per-point traces and certification reports, and offline
//! re-verification of emitted traces.

pub mod checks;
pub mod config;
pub mod error;
pub mod exec;
pub mod output;

pub use config::{parse_config, RunConfig};
pub use error::CliError;
pub use exec::{execute, ExecOutcome};
