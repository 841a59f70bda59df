//! `scribble-bench`: scribble generation, refinement benchmarks, toy training
//! and the session service from one binary.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on runtime failures
//! (including a failed gradient check).

mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

/// Bad invocation rather than a failed computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os().collect()))
}

fn run(argv: Vec<OsString>) -> u8 {
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level.into())
        .format_timestamp(None)
        .init();
    let out = cli.out.as_deref();
    let result = match &cli.command {
        Command::Scribble(a) => commands::scribble(a, cli.seed, out),
        Command::Eval(a) => commands::eval(a, cli.seed, out),
        Command::PointsSweep(a) => commands::points_sweep_cmd(a, cli.seed, out),
        Command::Gradcheck(a) => match commands::gradcheck(a, cli.seed, out) {
            Ok(true) => Ok(()),
            Ok(false) => Err(anyhow::anyhow!("gradient check failed")),
            Err(e) => Err(e),
        },
        Command::Train(a) => commands::train(a, cli.seed, out),
        Command::SynthData(a) => commands::synth_data(a, cli.seed, out),
        Command::Serve(a) => commands::serve(a, cli.seed),
        Command::Report(a) => commands::report(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                1
            } else {
                2
            }
        }
    }
}

fn parse(argv: Vec<OsString>) -> Result<Cli, u8> {
    let cmd = Cli::command();
    let matches = cmd.clone().try_get_matches_from(&argv).map_err(clap_exit)?;
    let matches = match matches.get_one::<std::path::PathBuf>("config") {
        Some(path) => {
            let merged = config::merge(&cmd, argv, &matches, path).map_err(|e| {
                eprintln!("error: {e:#}");
                if e.is::<UsageError>() {
                    1
                } else {
                    2
                }
            })?;
            cmd.try_get_matches_from(merged).map_err(clap_exit)?
        }
        None => matches,
    };
    Cli::from_arg_matches(&matches).map_err(clap_exit)
}

fn clap_exit(e: clap::Error) -> u8 {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = e.print();
            0
        }
        _ => {
            let text = e.render().to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{}", line.trim_end());
            1
        }
    }
}
