use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twoweight::lab::{run, Experiment, ExperimentConfig, Outcome};
use twoweight::Error;

/// Two-weight inequality laboratory for the dyadic maximal function.
///
/// Exit codes: 0 success, 1 internal error, 2 input error, 3 theorem
/// violation flagged by a decomposition, 4 lattice too large.
#[derive(Parser, Debug)]
#[command(name = "twoweight", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// A_p, testing and restricted testing constants and a norm lower bound of one pair.
    Constants(RunArgs),
    /// Four-collection decomposition of the subcubes of every Q0 at the configured levels.
    Decompose(RunArgs),
    /// CSV sweep of norm / (A_p + restricted testing) over random instances.
    Equivalence(RunArgs),
    /// CSV sweep of the power-weight pair over a grid of ε.
    PowerWeight(RunArgs),
    /// CSV sweep of the restricted testing constant over a grid of D.
    Dthreshold(RunArgs),
    /// Constants of the dyadic Poisson model and the domination check.
    Poisson(RunArgs),
    /// Constants of the dyadic fractional integral.
    Fractional(RunArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Report destination; defaults to the configured output, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decompose in exact rational arithmetic.
    #[arg(long)]
    exact: bool,
}

impl Command {
    fn split(self) -> (Experiment, RunArgs) {
        match self {
            Command::Constants(a) => (Experiment::Constants, a),
            Command::Decompose(a) => (Experiment::Decompose, a),
            Command::Equivalence(a) => (Experiment::Equivalence, a),
            Command::PowerWeight(a) => (Experiment::PowerWeight, a),
            Command::Dthreshold(a) => (Experiment::Dthreshold, a),
            Command::Poisson(a) => (Experiment::Poisson, a),
            Command::Fractional(a) => (Experiment::Fractional, a),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SizeGuard { .. } => 4,
        Error::Input(_)
        | Error::InvalidParameter(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Mismatch(_)
        | Error::NonIntegrable { .. }
        | Error::NotAligned(_) => 2,
        _ => 1,
    }
}

/// `report.csv` -> `report.csv.summary.json`.
fn summary_path(out: &Path) -> PathBuf {
    let mut name: OsString = out.as_os_str().to_owned();
    name.push(".summary.json");
    PathBuf::from(name)
}

fn emit(outcome: &Outcome, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => {
            std::fs::write(path, &outcome.report)?;
            if let Some(summary) = &outcome.summary {
                std::fs::write(summary_path(path), summary)?;
            }
        }
        None => {
            print!("{}", outcome.report);
            if let Some(summary) = &outcome.summary {
                eprint!("{summary}");
            }
        }
    }
    Ok(())
}

fn execute(experiment: Experiment, args: RunArgs) -> Result<bool, Error> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.exact {
        config.exact = true;
    }
    let out = args.out.or_else(|| config.output.clone());
    let outcome = run(experiment, &config)?;
    emit(&outcome, out.as_deref())?;
    Ok(outcome.theorem_violation)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = cli.command.split();
    match execute(experiment, args) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("twoweight: remaining collection nonempty at D >= paper_D");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("twoweight: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
