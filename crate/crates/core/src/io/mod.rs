//! Configuration, artifacts and the command-line entry points.

pub mod commands;
pub mod config;
pub mod expr;
pub mod format;
pub mod run_dir;
pub mod snapshot;
