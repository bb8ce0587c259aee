use std::process::ExitCode;

use clap::Parser;
use safeflow_cli::{run, Cli};

fn main() -> ExitCode {
    run(&Cli::parse())
}
