//! Command implementations behind the `linetube` binary.

pub mod artifact;
pub mod commands;
pub mod output;

pub use commands::{cmd_simulate, cmd_synthesize, cmd_validate, CliError, SimulateOptions};
