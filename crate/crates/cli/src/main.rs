//! `hmpc`: closed-loop runs, controller comparisons, chain validation and
//! the kinematic verification suite.
//!
//! Exit codes: 0 success, 1 run failure or failed verification check,
//! 2 trajectory generation failure, 3 configuration error.

mod compare;
mod error;
mod input;
mod output;
mod run;
mod validate;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hmpc", version = output::VERSION, about = "Hierarchical MPC for modular manipulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario closed loop; writes log.csv, summary.csv and manifest.json.
    Run(run::RunArgs),
    /// Run H-MPC, weighted MPC and HQP on shared references; writes boxstats.csv and winners.csv.
    Compare(compare::CompareArgs),
    /// Finite-difference and prediction-order checks; writes order_report.csv and checks.csv.
    Verify(verify::VerifyArgs),
    /// Check a chain description.
    Validate(validate::ValidateArgs),
}

fn main() -> ExitCode {
    // Usage errors are config errors; clap's own code 2 would read as a trajectory failure.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run::cmd_run(a),
        Command::Compare(a) => compare::cmd_compare(a),
        Command::Verify(a) => verify::cmd_verify(a),
        Command::Validate(a) => validate::cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hmpc: {e}");
            e.exit_code()
        }
    }
}
