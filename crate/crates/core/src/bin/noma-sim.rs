//! Command-line driver for the Monte-Carlo experiments.
//!
//! Every flag can also be set through an environment variable with the
//! `NOMA_SIM_` prefix, e.g. `NOMA_SIM_TRIALS=50`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use noma_secrecy::experiments::{run_experiment, ExperimentKind, ExperimentSpec, DEFAULT_TRIALS};
use noma_secrecy::scenario::SystemConfig;

#[derive(Parser)]
#[command(name = "noma-sim", version, about = "Secrecy-rate experiments for untrusted NOMA downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Timing {
    /// Time only the runtime experiment.
    Auto,
    On,
    Off,
}

#[derive(clap::Args)]
struct RunArgs {
    /// iters, users, power, runtime or epsilon.
    #[arg(long, env = "NOMA_SIM_EXPERIMENT")]
    experiment: ExperimentKind,
    /// Flat `key = value` system configuration.
    #[arg(long, env = "NOMA_SIM_CONFIG")]
    config: Option<PathBuf>,
    /// Base seed; overrides `rng_seed` from the config.
    #[arg(long, env = "NOMA_SIM_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "NOMA_SIM_TRIALS", default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, env = "NOMA_SIM_OUT")]
    out: PathBuf,
    /// Also write barrier Newton traces to `<out stem>.trace.csv`.
    #[arg(long, env = "NOMA_SIM_TRACE")]
    trace: bool,
    /// Barrier gap tolerance for experiments that do not sweep it.
    #[arg(long, env = "NOMA_SIM_EPSILON")]
    epsilon: Option<f64>,
    /// Comma-separated sweep values replacing the defaults.
    #[arg(long, env = "NOMA_SIM_SWEEP", value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[arg(long, env = "NOMA_SIM_TIMING", value_enum, default_value_t = Timing::Auto)]
    timing: Timing,
}

fn run(args: RunArgs) -> noma_secrecy::Result<bool> {
    let mut base = match &args.config {
        Some(path) => SystemConfig::from_file(path)?,
        None => SystemConfig::default(),
    };
    if let Some(seed) = args.seed {
        base.rng_seed = seed;
    }
    let mut spec = ExperimentSpec::new(args.experiment, base, args.out);
    spec.trials = args.trials;
    spec.trace = args.trace;
    if let Some(eps) = args.epsilon {
        spec.params.barrier.epsilon = eps;
    }
    if let Some(sweep) = args.sweep {
        spec.sweep = sweep;
    }
    spec.timing = match args.timing {
        Timing::Auto => args.experiment.times_by_default(),
        Timing::On => true,
        Timing::Off => false,
    };

    let report = run_experiment(&spec)?;
    for f in &report.failures {
        eprintln!("noma-sim: {f}");
    }
    eprintln!(
        "noma-sim: {} trials, {} failed, results in {}",
        report.trials_run,
        report.failures.len(),
        spec.out.display()
    );
    Ok(!report.exceeds_failure_limit())
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("noma-sim: more than 1% of trials failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("noma-sim: {e}");
            ExitCode::FAILURE
        }
    }
}
