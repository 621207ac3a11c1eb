//! Command-line front end: configuration, orchestration and artifacts.

pub mod config;
pub mod error;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use run::{run_oracle, run_simulate, run_solve, run_verify};
