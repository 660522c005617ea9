//! Library side of the `krlab` command-line tool: configuration parsing,
//! subcommands and file output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;

pub use commands::{run_command, Command, Overrides};
pub use config::{load_config, parse_config, RunConfig};
pub use error::CliError;
