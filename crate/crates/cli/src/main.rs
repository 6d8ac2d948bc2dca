mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use hdr_core::Error;

use args::{Cli, Command};

const EXIT_IO: u8 = 2;
const EXIT_REGISTRATION: u8 = 3;
const EXIT_CONFIG: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::RegistrationFailed { .. } | Error::NotEnoughMatches { .. } | Error::Degenerate => {
            EXIT_REGISTRATION
        }
        Error::InvalidParameter(_) => EXIT_CONFIG,
        _ => EXIT_IO,
    }
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("HDR_WORKERS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("HDR_WORKERS must be a positive integer, got '{v}'")),
        Err(_) => Ok(None),
    }
}

fn dispatch(command: &Command) -> hdr_core::Result<()> {
    match command {
        Command::Run {
            inputs,
            params,
            out,
            dump_all,
        } => commands::run(inputs, params, out, dump_all.as_deref()),
        Command::Synth(a) => commands::synth(a),
        Command::Match(a) => commands::stage_match(a),
        Command::Weed(a) => commands::stage_weed(a),
        Command::Flow(a) => commands::stage_flow(a),
        Command::Warp(a) => commands::stage_warp(a),
        Command::Fuse(a) => commands::stage_fuse(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    let threads = match workers(cli.workers) {
        Ok(Some(0)) => {
            eprintln!("error: worker count must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        Ok(n) => n.unwrap_or(0),
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
