//! WAV and filter-bank I/O, run configuration, the benchmark harness and the
//! `sslr` command line, built on [`sslr_core`].

pub mod cli;
pub mod commands;
pub mod config;
mod error;
pub mod filters;
pub mod report;
pub mod selftest;
pub mod wav;

pub use error::{CliError, CliResult};
