//! File formats, project loading, output tables and subcommands for the
//! `spinrelax` binary.

pub mod commands;
pub mod error;
pub mod examples;
pub mod formats;
pub mod output;
pub mod project;
