mod args;
mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use veclm::error::Error;

use args::{Cli, Command};
use commands::Context;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

/// Bad flag values are usage errors; everything else concerns the data.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Param(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let ctx = Context {
        global: &cli.global,
        command: cli.command.name(),
    };
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Embed(a) => commands::embed(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Cluster(a) => commands::cluster(&ctx, a),
        Command::Sweep(a) => commands::sweep(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
