//! Configuration loading and mode drivers behind the `sigexec` binary.

pub mod config;
pub mod error;
pub mod run;

pub use config::{load_config, parse_config, AgentSpec, Mode, RunConfig};
pub use error::CliError;
pub use run::{execute, Invocation, Summary};
