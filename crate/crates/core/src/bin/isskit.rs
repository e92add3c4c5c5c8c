use clap::Parser;
use isskit::cli::{main_with, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(main_with(Cli::parse()))
}
