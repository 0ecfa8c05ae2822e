//! Command-line driver: batch ingest, cut selection, metric reports, the
//! scaling benchmark, layout export, the API server and a synthetic demo.

pub mod args;
pub mod bench;
mod commands;
pub mod files;
pub mod pipeline;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command, Common};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] topicflow::Error),
    #[error("{0}")]
    Service(#[from] topicflow_service::ServiceError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}")]
    Input(String),
}

/// Parses `argv` and runs the subcommand. Usage errors exit with 2, runtime
/// errors with 1.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(&cli.common, cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
