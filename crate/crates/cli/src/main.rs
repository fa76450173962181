use std::process::ExitCode;

use clap::Parser;
use fragscope_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fragscope: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
