use std::process::ExitCode;

use clap::Parser;
use loophole::cli::{render_error, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", render_error(&e, cli.json));
            ExitCode::FAILURE
        }
    }
}
