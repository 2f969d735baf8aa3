use std::process::ExitCode;

use clap::Parser;
use equicanon::args::Cli;
use equicanon::{commands, exit};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads.max(1)).build();
    let result = match pool {
        Ok(pool) => pool.install(|| commands::run(&cli)),
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
