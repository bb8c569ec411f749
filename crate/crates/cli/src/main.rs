use std::io::Write;

use clap::Parser;
use greenwave_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(lines) => {
            let mut out = std::io::stdout().lock();
            for l in lines {
                // a closed pipe is not a failure of the run
                if writeln!(out, "{l}").is_err() {
                    break;
                }
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}
