//! `swedge`: analysis, design probing, diagnostics and simulation for stepped-wedge trials
//! with noncompliance.
//!
//! Exit status: 0 on success, 1 when the analysis is degenerate (every method declined,
//! or the duration regressions could not be fitted), 2 on configuration or I/O errors.

mod analyze;
mod diagnose;
mod error;
mod output;
mod probe;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "swedge", version, about = "Design-based effect-ratio inference for stepped-wedge trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Point estimates, 90% and 95% intervals and p-values for each requested method.
    Analyze(analyze::AnalyzeArgs),
    /// Run simulation cells and report bias, MSE, type I error and power.
    Simulate(simulate::SimulateArgs),
    /// Assignment propensities, flagged periods and enumerability of a design.
    DesignProbe(probe::ProbeArgs),
    /// Treatment-duration regressions and covariate balance.
    Diagnose(diagnose::DiagnoseArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze(a) => analyze::run(a),
        Command::Simulate(a) => simulate::run(a).map(|()| false),
        Command::DesignProbe(a) => probe::run(a).map(|()| false),
        Command::Diagnose(a) => diagnose::run(a),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: analysis is degenerate; see the report for each method's reason");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
