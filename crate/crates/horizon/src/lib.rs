//! Front end for `pmp-core`: TOML run configuration, JSON report and CSV
//! trace emission, and the `pmp-horizon` command line.

pub mod app;
pub mod config;
pub mod report;

pub use app::{execute, main_with, resolve, RunArgs};
pub use config::{ConfigError, RunConfig};
pub use report::{sha256_hex, trace_csv, Report};

/// Environment variable read for the log filter.
pub const LOG_ENV: &str = "PMP_HORIZON_LOG";
