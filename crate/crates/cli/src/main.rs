mod args;
mod commands;
mod error;
mod manifest;
mod plot;
mod report;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;
use crate::error::{EXIT_OK, EXIT_USAGE};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                std::process::exit(EXIT_OK);
            }
            let record = serde_json::json!({
                "error": { "kind": "usage", "message": e.kind().to_string(), "exit_code": EXIT_USAGE }
            });
            eprintln!("{record}");
            std::process::exit(EXIT_USAGE);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = ctrlc::set_handler(|| {
        manifest::interrupt_active();
        std::process::exit(130);
    }) {
        log::warn!("no signal handler: {e}");
    }

    match commands::dispatch(cli.command) {
        Ok(()) => std::process::exit(EXIT_OK),
        Err(e) => {
            eprintln!("{}", e.record());
            std::process::exit(e.exit_code());
        }
    }
}
