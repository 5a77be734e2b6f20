//! Command-line surface for `cayley-gibbs`.
//!
//! [`run`] parses arguments, dispatches a subcommand and maps failures onto
//! exit codes: `2` for argument and parameter errors, `1` for a failed
//! `verify` run or an I/O failure, `0` otherwise.

pub mod args;
pub mod commands;
pub mod grid;
pub mod verify;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

/// Failure to run a command with the given arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Library errors raised by user-supplied parameters count as usage errors.
pub fn from_core(err: cayley_gibbs::Error) -> anyhow::Error {
    UsageError(err.to_string()).into()
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
