mod commands;
mod config;
mod failure;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::failure::{Failure, Kind};

fn main() -> ExitCode {
    let cli = match config::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::new(Kind::Config, e.to_string().trim_end());
            eprintln!("{}", f.to_json_line());
            return ExitCode::from(f.kind.exit_code());
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json_line());
            ExitCode::from(f.kind.exit_code())
        }
    }
}
