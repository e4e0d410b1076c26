use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dalembert::cli::{load_config, report_json, run, Command, RunOptions};

/// Solve factored linear evolution equations described by a TOML file.
#[derive(Debug, Parser)]
#[command(name = "dalembert", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Problem definition (TOML).
    config: PathBuf,
    /// Seed for `[random]` instances.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the CSV trace or JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let options = RunOptions {
        seed: args.seed,
        out: args.out,
    };
    let outcome = match run(&config, args.command, &options) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let mut stdout = std::io::stdout().lock();
    if outcome.written.is_empty() {
        if let Some(csv) = &outcome.csv {
            let _ = stdout.write_all(csv.as_bytes());
            if let Some(report) = &outcome.report {
                eprintln!("{}", report_json(report).expect("report serializes"));
            }
        } else if let Some(report) = &outcome.report {
            let _ = writeln!(stdout, "{}", report_json(report).expect("report serializes"));
        }
    } else {
        for path in &outcome.written {
            eprintln!("wrote {}", path.display());
        }
    }

    match outcome.report.as_ref().and_then(|r| r.first_failure()) {
        Some(check) => {
            eprintln!(
                "FAILED: {} (observed {:e}, tolerance {:e}){}",
                check.name,
                check.observed,
                check.tolerance,
                check.detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default()
            );
            ExitCode::from(1)
        }
        None => ExitCode::SUCCESS,
    }
}
