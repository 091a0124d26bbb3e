//! Command-line front end: configuration loading, dataset assembly, and
//! the subcommand implementations behind the `loopsplat` binary.

pub mod commands;
pub mod config;
pub mod dataset;
