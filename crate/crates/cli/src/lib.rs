//! CLI for the cmpagg engine.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data/format
//! error, 3 numerical failure during training.

use clap::error::ErrorKind;
use clap::Parser;

use cmpagg::error::Error;

pub mod args;
pub mod commands;
pub mod config;

use args::{Cli, Command};

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::Dimension(_) => 1,
        Error::Format(_) | Error::Io(_) | Error::Input(_) | Error::Lookup(_) => 2,
        Error::Training(_) => 3,
    }
}

fn execute(cli: &Cli) -> cmpagg::Result<()> {
    match &cli.command {
        Command::Train(args) => commands::cmd_train(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Ablate(args) => commands::cmd_ablate(args),
        Command::Inspect(args) => commands::cmd_inspect(args),
        Command::GenData(args) => commands::cmd_gen_data(args),
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
