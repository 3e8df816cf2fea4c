use std::process::ExitCode;

use clap::Parser;
use simplexfold::cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            for f in &out.failures {
                eprintln!("FAILED: {f}");
            }
            if let Some(m) = &out.manifest {
                eprintln!("manifest: {}", m.display());
            }
            if out.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
