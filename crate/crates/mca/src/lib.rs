//! IO side of the association engine: WILDTRACK-layout datasets, the match
//! interchange format, run configuration, result writers and the command
//! implementations behind the `mca` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod interchange;
pub mod manifest;
pub mod report;
