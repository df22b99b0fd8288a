mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Exit status 2 for usage and input problems, 3 for failed computations.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Input(_) => 2,
            Failure::Compute(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Input(m) => write!(f, "input: {m}"),
            Failure::Compute(m) => write!(f, "computation failed: {m}"),
        }
    }
}

impl From<snf_core::Error> for Failure {
    fn from(e: snf_core::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Compute(e.to_string())
        }
    }
}

fn parse(argv: Vec<OsString>) -> Result<Command, ExitCode> {
    let exit = |e: clap::Error| {
        let _ = e.print();
        ExitCode::from(if e.use_stderr() { 2 } else { 0 })
    };
    let argv = match config::find(&argv) {
        Some(path) => config::expand(&argv, &path).map_err(|f| {
            eprintln!("snf: {f}");
            ExitCode::from(f.code())
        })?,
        None => argv,
    };
    let cli = Cli::try_parse_from(argv).map_err(exit)?;
    cli.command.ok_or_else(|| {
        eprintln!("snf: a subcommand or --config is required (see snf --help)");
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let command = match parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let outcome = match command {
        Command::Solve(a) => commands::solve(a),
        Command::Compare(a) => commands::compare(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Serve(a) => commands::serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("snf: {f}");
            ExitCode::from(f.code())
        }
    }
}
