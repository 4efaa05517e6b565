use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msplab_cli::run::{run, Command, RunOptions};
use msplab_cli::verify::{self, Level};

#[derive(Parser)]
#[command(name = "msplab", version, about = "Staircase learnability experiments for two-layer networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Test the merged-staircase property of a target.
    MspCheck(RunArgs),
    /// Train with one-pass batch SGD in ambient dimension.
    TrainSgd(RunArgs),
    /// Integrate the dimension-free particle flow.
    TrainDfpde(RunArgs),
    /// Layer-wise training with the kernel certificate.
    TwoPhase(RunArgs),
    /// Check the small-time series of the first-layer weights.
    RecurrenceVerify(RunArgs),
    /// Sweep the dimension lower bounds.
    LowerBound(RunArgs),
    /// Batch SGD against the dimension-free flow.
    Compare(RunArgs),
    /// Run the invariant suites.
    Verify {
        #[arg(value_enum, default_value = "quick")]
        level: LevelArg,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the main CSV trace to stdout.
    #[arg(long)]
    csv: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.cmd {
        Cmd::MspCheck(a) => (Command::MspCheck, a),
        Cmd::TrainSgd(a) => (Command::TrainSgd, a),
        Cmd::TrainDfpde(a) => (Command::TrainDfpde, a),
        Cmd::TwoPhase(a) => (Command::TwoPhase, a),
        Cmd::RecurrenceVerify(a) => (Command::RecurrenceVerify, a),
        Cmd::LowerBound(a) => (Command::LowerBound, a),
        Cmd::Compare(a) => (Command::Compare, a),
        Cmd::Verify { level } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let (report, failed) = verify::run(level);
            print!("{report}");
            if failed.is_empty() {
                return ExitCode::SUCCESS;
            }
            eprintln!("failed invariants: {}", failed.join(", "));
            return ExitCode::from(4);
        }
    };
    let opts = RunOptions { config: args.config, preset: args.preset, seed: args.seed, out: args.out, csv: args.csv };
    match run(command, &opts) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
