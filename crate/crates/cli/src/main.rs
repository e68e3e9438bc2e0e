//! `driftguard`: generate data, calibrate control limits, monitor streams
//! and run the replicated studies.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

mod args;
mod commands;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = args::Cli::parse();
    if let Err(e) = commands::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
