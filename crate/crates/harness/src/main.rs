use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dicke_harness::{pipelines, Experiment, ExperimentConfig, HarnessError, Overrides};

/// Phase-space localization experiments for the Dicke model.
///
/// Results go to CSV tables and a JSON summary in the output directory.
/// Exit status: 0 success, 2 configuration error, 3 convergence error,
/// 4 numerical failure.
#[derive(Parser)]
#[command(name = "dicke", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Diagonalize and list the spectrum with convergence flags.
    Diag,
    /// Occupation statistics of the eigenstates in a window.
    Eigstats,
    /// Instantaneous and time-averaged occupations of an evolving coherent state.
    Evolve,
    /// Occupations of pair mixtures against their separation.
    Separate,
    /// Occupations of growing coherent-state mixtures on one shell.
    Saturate,
    /// Energy profiles of eigenstates and coherent states.
    Profile,
    /// Density of states against the finite-difference volume oracle.
    Dos,
    /// Random pure states against the coherent-state lower bound.
    Bound,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Rényi order; repeat for several.
    #[arg(long, global = true)]
    alpha: Vec<f64>,
    #[arg(long, global = true)]
    j: Option<f64>,
    /// Allow j above desk scale (j = 30 runs take hours).
    #[arg(long, global = true)]
    full_scale: bool,
    #[arg(long, global = true)]
    save_spectrum: Option<PathBuf>,
    #[arg(long, global = true)]
    load_spectrum: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn experiment(c: &Command) -> Experiment {
    match c {
        Command::Diag => Experiment::Diag,
        Command::Eigstats => Experiment::Eigstats,
        Command::Evolve => Experiment::Evolve,
        Command::Separate => Experiment::Separate,
        Command::Saturate => Experiment::Saturate,
        Command::Profile => Experiment::Profile,
        Command::Dos => Experiment::Dos,
        Command::Bound => Experiment::Bound,
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let c = cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if c.full_scale => ExperimentConfig::full_scale(),
        None => ExperimentConfig::default(),
    };
    let exp = experiment(&cli.command);
    if let Some(tagged) = cfg.experiment {
        if tagged != exp {
            eprintln!("note: config is tagged {}, running {}", tagged.name(), exp.name());
        }
    }
    cfg.experiment = Some(exp);
    cfg.apply(&Overrides {
        seed: c.seed,
        out_dir: c.out_dir,
        alphas: (!c.alpha.is_empty()).then_some(c.alpha),
        j: c.j,
        full_scale: c.full_scale,
        save_spectrum: c.save_spectrum,
        load_spectrum: c.load_spectrum,
    })?;
    let out = pipelines::run(exp, &cfg)?;
    for t in &out.tables {
        println!("{}", t.display());
    }
    println!("{}", out.summary.display());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
