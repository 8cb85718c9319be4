mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use svbop_core::{Error, ErrorCategory};

use args::{Cli, Command};

fn exit_code(err: &Error) -> u8 {
    match err.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Internal => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::ConfigConflict(format!("thread pool: {e}")))?;
    let seed = cli.seed;
    match &cli.command {
        Command::Train(a) => commands::train(a, seed),
        Command::TreeBuild(a) => commands::tree_build(a, seed),
        Command::IndexBuild(a) => commands::index_build(a, seed),
        Command::Predict(a) => commands::predict(a, seed, cli.format),
        Command::Eval(a) => commands::eval(a, seed, cli.format),
        Command::OracleCheck(a) => commands::oracle_check(a, seed, cli.format),
        Command::Synth(a) => commands::synth(a, seed),
    }
}

fn main() -> ExitCode {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    if let Some(path) = config::config_path(&args) {
        args = match config::merge(args, Path::new(&path)) {
            Ok(merged) => merged,
            Err(e) => {
                eprintln!("error: config {}: {e}", Path::new(&path).display());
                return ExitCode::from(2);
            }
        };
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
