use std::process::ExitCode;

use clap::Parser;
use obtree::Error;

use obtree_cli::args::{Cli, Command};
use obtree_cli::commands;

/// Exit status for failures caused by the input or flags.
const EXIT_USER: u8 = 1;
/// Exit status for failures inside the library.
const EXIT_INTERNAL: u8 = 2;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NonFinite { .. } | Error::AllStartsFailed | Error::AllDepthsFailed | Error::MissingEntries) => {
            EXIT_INTERNAL
        }
        _ => EXIT_USER,
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn set_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            anyhow::bail!(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => {
            init_logging(a.input.quiet);
            set_threads(a.input.threads)?;
            commands::train(&a)
        }
        Command::Predict(a) => {
            init_logging(true);
            commands::predict(&a)
        }
        Command::Tune(a) => {
            init_logging(a.input.quiet);
            set_threads(a.input.threads)?;
            commands::tune(&a)
        }
        Command::Bench(a) => {
            init_logging(a.input.quiet);
            set_threads(a.input.threads)?;
            commands::bench(&a)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USER) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
