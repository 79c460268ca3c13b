//! Experiment harness and command-line front end for `mindex-core`.
//!
//! - [`cli`]: argument parsing and subcommand dispatch.
//! - [`config`]: the run configuration and its layered parsing.
//! - [`commands`]: single runs (`train`, `spectral`, `verify-approx`).
//! - [`experiments`]: parallel sweeps that emit CSV tables.
//! - [`report`]: JSON envelopes, hashing and file output.

pub mod cli;
pub mod commands;
pub mod config;
pub mod experiments;
pub mod report;

pub use config::{parse_config, ConfigSource, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Core(#[from] mindex_core::Error),
    #[error(transparent)]
    Output(#[from] report::OutputError),
    #[error("thread pool: {0}")]
    Threads(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
