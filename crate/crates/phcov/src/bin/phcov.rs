//! Scenario runner CLI: execute scenario files, run invariant checks, list
//! builtins.
//!
//! Exit codes: 0 success / all checks pass, 1 check failure, 2 input error,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phcov::runner::{builtin_scenarios, run_scenario, Method, Overrides, ScenarioOutcome};

#[derive(Parser)]
#[command(
    name = "phcov",
    about = "Time-variant port-Hamiltonian scenario runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file, write trajectory and ledger CSVs, and run
    /// the scenario's invariant checks.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Output directory for CSV artifacts.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Override the file's time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the file's method (rk4 | midpoint).
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the invariant checks without writing trajectories.
    Check {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Override the file's time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the file's method (rk4 | midpoint).
        #[arg(long)]
        method: Option<String>,
    },
    /// Print the builtin scenarios.
    List,
}

fn overrides(dt: Option<f64>, method: Option<String>) -> Result<Overrides, phcov::Error> {
    let method = match method {
        Some(s) => Some(s.parse::<Method>()?),
        None => None,
    };
    Ok(Overrides { dt, method })
}

fn report(outcome: &ScenarioOutcome) -> bool {
    println!("scenario: {}", outcome.name);
    for c in &outcome.checks {
        println!(
            "  check {:<24} value {:>12.4e}  threshold {:>10.2e}  {}",
            c.name,
            c.value,
            c.threshold,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    for a in &outcome.artifacts {
        println!("  wrote {}", a.display());
    }
    let ok = outcome.passed();
    println!("result: {}", if ok { "pass" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, blurb) in builtin_scenarios() {
                println!("{name:<16} {blurb}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            scenario,
            out_dir,
            dt,
            method,
        } => dispatch(&scenario, dt, method, Some(out_dir)),
        Command::Check {
            scenario,
            dt,
            method,
        } => dispatch(&scenario, dt, method, None),
    }
}

fn dispatch(
    scenario: &std::path::Path,
    dt: Option<f64>,
    method: Option<String>,
    out_dir: Option<PathBuf>,
) -> ExitCode {
    let ov = match overrides(dt, method) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let write = out_dir.is_some();
    let dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
    match run_scenario(scenario, &ov, &dir, write) {
        Ok(outcome) => {
            if report(&outcome) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
