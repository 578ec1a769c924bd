//! Data, configuration, reports and the experiment drivers behind the CLI.

pub mod config;
pub mod data;
pub mod report;
pub mod run;
