use std::process::ExitCode;

use clap::Parser;
use regime_lab_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            for c in &summary.checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                match &c.error {
                    Some(e) => println!("{status} {:<18} error: {e}", c.check),
                    None => println!("{status} {:<18} {}", c.check, c.criterion),
                }
            }
            println!("wrote {} files to {}", summary.files.len(), summary.out_dir.display());
            if summary.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
