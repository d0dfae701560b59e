//! `hazard-iv` command-line front end.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 an estimating equation
//! had no solution or the solver failed. Errors are also written to stderr
//! as one JSON object per line.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Failure;

const THREADS_ENV: &str = "HAZARD_IV_THREADS";

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::input("config", format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Failure::input("config", format!("cannot start thread pool: {e}")))
}

fn run(cli: Cli) -> Result<i32, Failure> {
    let pool = thread_pool()?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Km(a) => commands::km(a),
    })
}

fn report(f: &Failure) {
    eprintln!("{}", serde_json::json!({ "error": f }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report(&Failure::input("usage", e.to_string().trim_end()));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            report(&f);
            ExitCode::from(f.exit_code as u8)
        }
    }
}
