use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use diffeo_core::cli::{execute, parse_diag, Options};

/// Checks differentiable structures on wedge complexes of lines.
#[derive(Parser, Debug)]
#[command(name = "diffeo", version)]
struct Args {
    /// One of check, dual-metric, clifford-table, dirac, report.
    command: String,
    /// JSON config file.
    config: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma separated diagonal metric for clifford-table, e.g. 1,-1,1/2.
    #[arg(long)]
    diag: Option<String>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let diag = match args.diag.as_deref().map(parse_diag).transpose() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let opts = Options { seed: args.seed, tolerance: args.tol, diag };
    let code = execute(&args.command, args.config.as_deref(), &opts, args.json.as_deref());
    ExitCode::from(code as u8)
}
