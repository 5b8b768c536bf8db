//! `driftband`: solve, evaluate, certify and simulate drift-band inventory instances.

mod commands;
mod docs;
mod failure;
mod policy_arg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::failure::Failure;
use crate::policy_arg::PolicyArg;

#[derive(Debug, Parser)]
#[command(name = "driftband", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the free boundary problem; writes solution.json and curve.csv.
    Solve(Common),
    /// Exact long-run average cost of a band policy; writes eval.json.
    Eval(Common),
    /// Monte Carlo estimate for a band policy; writes simulate.json.
    Simulate(Common),
    /// Certify a solution as a lower bound; writes verify.json, exit 4 on failure.
    Verify(Common),
    /// Simulate the 27 band perturbations around a policy; writes sweep.json.
    Sweep(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Instance file (TOML).
    config: PathBuf,

    /// Root tolerance of the solver; the ODE tolerance follows at 1/100.
    #[arg(long)]
    tol: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    replications: Option<usize>,

    #[arg(long)]
    dt: Option<f64>,

    #[arg(long)]
    horizon: Option<f64>,

    /// `q=..,Q=..,S=..,mu=const:<v>` or `mu=from-solution`.
    #[arg(long)]
    policy: Option<PolicyArg>,

    /// A solution.json written by `solve`, used instead of solving again.
    #[arg(long, value_name = "SUMMARY")]
    from_solution: Option<PathBuf>,

    #[arg(long, default_value = ".")]
    out_dir: PathBuf,

    /// Turn warnings (coarse time step, foreign solution file) into errors.
    #[arg(long)]
    strict: bool,

    /// Also write the first simulated path to trace.csv.
    #[arg(long)]
    trace: bool,

    /// Band offset used by `sweep`.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(c) => commands::solve(c),
        Command::Eval(c) => commands::eval(c),
        Command::Simulate(c) => commands::simulate(c),
        Command::Verify(c) => commands::verify(c),
        Command::Sweep(c) => commands::sweep(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code)
        }
    }
}

impl Failure {
    fn report(&self) {
        eprintln!("error: {}", self.message);
        if !self.trace.is_empty() {
            eprintln!("outer search trace (w0, d(w0)):");
            for (w0, d) in &self.trace {
                match d {
                    Some(d) => eprintln!("  {w0:>24.15e}  {d:>24.15e}"),
                    None => eprintln!("  {w0:>24.15e}  {:>24}", "-"),
                }
            }
        }
    }
}
