use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;
mod verify;

use config::{Flags, RunConfig};

#[derive(Parser)]
#[command(name = "vusa", version, about = "Virtually upscaled systolic array simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer zero statistics and window mix of the weights.
    Analyze,
    /// Cycles, throughput and normalized efficiency of each design.
    Simulate,
    /// Growth-probability curves and, with a topology, pruning-rate efficiency.
    Sweep,
    /// Seeded self-checks of the mapper, dataflow and analytics.
    Verify,
}

/// Command failure, one variant per nonzero exit code.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Runtime(String),
    Verification(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) => write!(f, "invalid configuration: {m}"),
            Failure::Runtime(m) => f.write_str(m),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<vusa_core::Error> for Failure {
    fn from(e: vusa_core::Error) -> Self {
        use vusa_core::Error;
        match e {
            Error::Io(_) | Error::Parse { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

/// Runtime failure reading `path`; IO errors already name the file.
pub fn file_failure(path: &std::path::Path, e: vusa_core::Error) -> Failure {
    match e {
        vusa_core::Error::Io(m) => Failure::Runtime(m),
        other => Failure::Runtime(format!("{}: {other}", path.display())),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    match cli.command {
        Command::Analyze => commands::analyze(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Verify => verify::run(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
