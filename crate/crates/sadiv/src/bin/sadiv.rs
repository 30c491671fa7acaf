//! Binary entry point: parse arguments, dispatch, map errors to the exit
//! convention (0 success, 1 property failure, 2 numerical guard, 64 usage).

use clap::Parser;
use sadiv::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version; its usage errors map to 64.
            let code = if e.exit_code() == 0 { 0 } else { 64 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
