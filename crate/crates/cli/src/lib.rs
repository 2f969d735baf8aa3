//! File formats, benchmarks and the `equicanon` command-line tool built on
//! [`equicanon_core`].

pub mod args;
pub mod bench;
pub mod cloud_io;
pub mod commands;
pub mod config;
mod error;
pub mod fsutil;
pub mod manifest;
pub mod observation;
pub mod params_io;

pub use equicanon_core as core;
pub use error::{exit, CliError, Result};
