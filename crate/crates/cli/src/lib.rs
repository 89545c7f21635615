//! Experiment driver for `dagnet`: run configuration and the command
//! implementations behind the `dagnet` binary.

pub mod commands;
pub mod config;

pub use config::RunConfig;
