mod cli;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::Cli;
use crate::commands::RunError;
use crate::config::RunConfig;

fn main() -> ExitCode {
    let args = Cli::parse();
    match execute(&args) {
        Ok(text) => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("toral {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Cli) -> Result<String, RunError> {
    let cfg = RunConfig::resolve(&args.overrides).map_err(RunError::Config)?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    }
    commands::run(args.command, &cfg)
}
