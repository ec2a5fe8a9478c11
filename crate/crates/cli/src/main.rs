use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use treeslice_cli::{execute, load, Overrides};

/// Tree-sliced Wasserstein experiments driven by a TOML config.
#[derive(Debug, Parser)]
#[command(name = "treeslice", version)]
struct Args {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output`; CSV goes to stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: $TREESLICE_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let loaded = match load(&args.config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        output: args.out,
        threads: args.threads,
    };
    match execute(&loaded, &overrides) {
        Ok(s) if s.passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("error: selftest failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
