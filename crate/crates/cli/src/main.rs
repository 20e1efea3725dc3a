use clap::Parser;
use randap_cli::{run, Cli};
use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            // a closed stdout (e.g. piped into head) must not change the exit code
            let mut out = std::io::stdout().lock();
            let _ = write!(out, "{}", outcome.summary);
            if !outcome.summary.ends_with('\n') {
                let _ = writeln!(out);
            }
            for f in &outcome.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
