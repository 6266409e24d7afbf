use std::process::ExitCode;

use causalq::structure::StructureError;
use clap::{CommandFactory, FromArgMatches};

mod args;
mod commands;
mod config;
mod io;

use args::{Cli, Command};

/// Bad flags or flag combinations; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        EXIT_USAGE
    } else if err.chain().any(|e| matches!(e.downcast_ref::<StructureError>(), Some(StructureError::NotConverged { .. }))) {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_DATA
    }
}

fn parse() -> Result<Cli, ExitCode> {
    let cmd = Cli::command();
    let args = config::expand(std::env::args_os().collect(), &cmd).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_USAGE)
    })?;
    cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(EXIT_USAGE)
        } else {
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    let cli = match parse() {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Discover(a) => commands::discover(a),
        Command::Fit(a) => commands::fit(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Trace(a) => commands::trace(a),
        Command::BenchScaling(a) => commands::bench(a),
        Command::RouteCompare(a) => commands::route_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
