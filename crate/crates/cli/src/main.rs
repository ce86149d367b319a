use std::process::ExitCode;

use choicefit_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    // Usage errors exit with 64 so that 2 stays reserved for identification failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
