use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use scbf::orchestrator::{exit_status, run, Command, ExperimentSpec};

/// Stochastic convective Brinkman–Forchheimer simulator and verification lab.
#[derive(Parser, Debug)]
#[command(name = "scbf", version)]
struct Args {
    /// simulate | verify-operators | stationary | stability | stabilize | ergodicity | isometry
    #[arg(long, value_parser = parse_command)]
    command: Command,

    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Overrides `ensemble.seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Work-pool size.
    #[arg(long, env = "SCBF_THREADS")]
    threads: Option<usize>,
}

fn parse_command(s: &str) -> Result<Command, String> {
    s.parse().map_err(|e: scbf::Error| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let spec = ExperimentSpec {
        command: args.command,
        config: args.config,
        out: args.out,
        seed: args.seed,
        threads: args.threads,
    };
    let outcome = run(&spec);
    match &outcome {
        Ok(o) => println!("{}: {}", o.command, if o.passed { "PASS" } else { "FAIL" }),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_status(&outcome) as u8)
}
