use std::process::ExitCode;

use clap::Parser;
use localdens::cli::{run, Cli, Outcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::ConfigJson(json)) => {
            println!("{json}");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Summary(s)) => {
            for (name, c) in &s.checks {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                println!("{verdict} {name}: value {:.6e}, tolerance {:.6e}", c.value, c.tolerance);
            }
            println!("config sha256 {}", s.config_sha256);
            if s.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
