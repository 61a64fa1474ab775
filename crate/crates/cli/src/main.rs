//! `treeseg`: DEM building, crown segmentation, evaluation, synthetic scenes
//! and SVG maps from one binary.

mod args;
mod commands;
mod render;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::Cli;
use commands::Failure;

fn version() -> &'static str {
    let text = format!(
        "{} (format {})",
        env!("CARGO_PKG_VERSION"),
        treeseg_core::FORMAT_VERSION
    );
    Box::leak(text.into_boxed_str())
}

fn parse() -> Result<Cli, clap::Error> {
    let matches = Cli::command().version(version()).try_get_matches()?;
    Cli::from_arg_matches(&matches)
}

fn main() -> ExitCode {
    let cli = match parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("treeseg: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
