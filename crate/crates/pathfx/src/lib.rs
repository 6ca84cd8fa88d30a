//! File formats, configuration and command drivers for `pathfx`.
//!
//! Estimation itself lives in `pathfx-core`; this crate reads CSV data and
//! TOML configuration, runs replicates on a rayon pool and writes reports.

pub mod config;
pub mod io;
pub mod report;
pub mod run;

pub use run::CliError;
