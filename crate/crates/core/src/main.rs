use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fairgrid::harness::{
    cmd_classify, cmd_normalize, cmd_report, cmd_schelling, cmd_trace, cmd_train, HarnessError,
};

#[derive(Parser)]
#[command(name = "fairgrid", version, about = "Matrix-game analysis and fairness-shaped gridworld training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a matrix game file (exit 0 iff it is a social dilemma)
    Classify { file: PathBuf },
    /// Rescale a matrix game's payoffs per agent onto [0, 1]
    Normalize { file: PathBuf },
    /// Sweep scripted cooperate/defect assignments and verify the dilemma empirically
    Schelling { config: PathBuf },
    /// Train independent Q-learners for every configured seed
    Train { config: PathBuf },
    /// Replay a reward/visibility trace through smoothing and estimate propagation
    Trace { file: PathBuf },
    /// Aggregate a run directory's metrics across seeds
    Report { run_dir: PathBuf },
}

fn run(cli: Cli) -> Result<(String, u8), HarnessError> {
    match cli.command {
        Command::Classify { file } => {
            let out = cmd_classify(&file)?;
            Ok((out.report, if out.is_dilemma { 0 } else { 1 }))
        }
        Command::Normalize { file } => Ok((cmd_normalize(&file)?, 0)),
        Command::Schelling { config } => Ok((cmd_schelling(&config)?, 0)),
        Command::Train { config } => Ok((cmd_train(&config)?, 0)),
        Command::Trace { file } => Ok((cmd_trace(&file)?, 0)),
        Command::Report { run_dir } => Ok((cmd_report(&run_dir)?, 0)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((output, code)) => {
            print!("{output}");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
