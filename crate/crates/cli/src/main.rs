use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tumorctl::{run_path, Command, Options};

#[derive(Parser)]
#[command(name = "tumorctl", version, about = "Simulate, differentiate and optimize the tumour-damage model")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Compare against the ODE reference (homogeneous data only).
    #[arg(long, global = true)]
    oracle: bool,
    /// Refine (positive) or coarsen (negative) grid and time step this many times.
    #[arg(long, global = true, default_value_t = 0, allow_hyphen_values = true)]
    refine: i32,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Forward solve with snapshots, manifest and invariant report.
    Simulate,
    /// Taylor test and adjoint gradient against finite differences.
    GradientCheck,
    /// Projected gradient descent with history and optimality report.
    Optimize,
    /// Separation interval of the damage and a post-hoc simulation check.
    Separation,
    /// Sampled check of the structural hypotheses.
    HypothesisCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Sub::Simulate => Command::Simulate,
        Sub::GradientCheck => Command::GradientCheck,
        Sub::Optimize => Command::Optimize,
        Sub::Separation => Command::Separation,
        Sub::HypothesisCheck => Command::HypothesisCheck,
    };
    let Some(config) = cli.config else {
        eprintln!("tumorctl {}: --config PATH is required", cmd.name());
        return ExitCode::from(2);
    };
    let opts = Options { oracle: cli.oracle, refine: cli.refine, out: cli.out };
    match run_path(cmd, &config, &opts) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("tumorctl {}: {e}", cmd.name());
            ExitCode::from(e.exit_code())
        }
    }
}
