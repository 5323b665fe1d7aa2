use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

use etes_cli::config::{load_config, Mode};
use etes_cli::runner::{execute, exit_code};

/// Deterministic event-triggered extremum seeking experiments.
#[derive(Parser, Debug)]
#[command(name = "etes", version, about)]
struct Args {
    /// Experiment config (TOML; see configs/ and the README for the schema).
    #[arg(long)]
    config: PathBuf,

    /// Override the config's mode: run | compare | sweep | average.
    #[arg(long)]
    mode: Option<String>,

    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Skip SVG plot emission (CSV output is unaffected).
    #[arg(long)]
    no_plots: bool,

    /// Runs are deterministic; this flag documents that no RNG exists.
    #[arg(long)]
    seedless: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut spec = match load_config(&args.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    if let Some(mode) = &args.mode {
        match Mode::parse(mode) {
            Ok(m) => spec.mode = m,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
        }
    }
    if let Some(out) = args.out {
        spec.output_dir = out;
    }
    if args.no_plots {
        spec.emit_plots = false;
    }
    if args.seedless {
        eprintln!("note: --seedless is informational; runs contain no randomness");
    }
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    match execute(&spec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
