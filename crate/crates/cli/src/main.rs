use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use fran_alloc::experiment::{parse_algorithms, run_experiment, ExperimentSpec, Sweep};

/// Seeded Monte Carlo experiments for joint RB and power allocation.
///
/// Flags override the matching fields of the config file.
#[derive(Debug, Parser)]
#[command(name = "fran-sim", version)]
struct Args {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Seed of trial 0; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list from joint, exhaustive, oma, fixed_power, random_rb.
    #[arg(long)]
    algorithms: Option<String>,
    /// `name=v1,v2,...` with name one of n_faps, z_max, n_rrhs.
    #[arg(long)]
    sweep: Option<String>,
    /// Also write traces.csv with the joint solver's outer iterations.
    #[arg(long)]
    traces: bool,
    /// Write runtime_ms as 0 so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
}

fn build_spec(args: &Args) -> anyhow::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::from_path(&args.config)?;
    let ex = &mut spec.experiment;
    if let Some(out) = &args.out {
        ex.out_path = out.clone();
    }
    if let Some(trials) = args.trials {
        ex.trials = trials;
    }
    if let Some(list) = &args.algorithms {
        ex.algorithms = parse_algorithms(list)?;
    }
    if let Some(sweep) = &args.sweep {
        ex.sweep = Some(sweep.parse::<Sweep>()?);
    }
    ex.traces |= args.traces;
    if args.no_timing {
        ex.timing = false;
    }
    if let Some(seed) = args.seed {
        spec.scenario.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(args: &Args) -> anyhow::Result<()> {
    let spec = build_spec(args)?;
    let out = run_experiment(&spec)?;
    let dir = &spec.experiment.out_path;
    out.write_to(&spec, dir).with_context(|| format!("writing results to {}", dir.display()))?;
    let errors = out.rows.iter().filter(|r| r.error.is_some()).count();
    log::info!("{} rows written to {} ({errors} error rows)", out.rows.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
