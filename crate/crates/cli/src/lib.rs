//! The `clv` command line: ingest, summarize, split, fit, predict, simulate,
//! evaluate and segment, with models persisted as versioned JSON artifacts.
//!
//! Exit codes: 0 success, 1 usage, 2 data validation, 3 numerical failure.

pub mod args;
pub mod artifact;
pub mod commands;
pub mod error;
pub mod io;
pub mod models;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use artifact::{ModelArtifact, ModelKind, ModelParams, SCHEMA_VERSION};
pub use error::{CliError, Result};

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
