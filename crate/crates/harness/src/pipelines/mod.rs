//! Experiment pipelines. Each writes CSV tables and a JSON summary into the
//! output directory and returns their paths.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use dicke_core::classical::{sample_shell, shell_roots_q, PhasePoint, ShellSample};
use dicke_core::husimi::{build_projection_grid, Plane, ProjectionGrid};
use dicke_core::model::{solve, BasisTag, ModelParams, Spectrum};
use dicke_core::rng::StreamFactory;
use dicke_core::states::FockContext;
use rand::RngCore;

use crate::config::{BasisKind, Experiment, ExperimentConfig, PointSpec};
use crate::error::{HarnessError, Result};

pub mod bound;
pub mod diag;
pub mod dos;
pub mod eigstats;
pub mod evolve;
pub mod profile;
pub mod saturate;
pub mod separate;

/// Files written by a pipeline.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub tables: Vec<PathBuf>,
    pub summary: PathBuf,
}

pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Outputs> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    match experiment {
        Experiment::Diag => diag::run(cfg),
        Experiment::Eigstats => eigstats::run(cfg),
        Experiment::Evolve => evolve::run(cfg),
        Experiment::Separate => separate::run(cfg),
        Experiment::Saturate => saturate::run(cfg),
        Experiment::Profile => profile::run(cfg),
        Experiment::Dos => dos::run(cfg),
        Experiment::Bound => bound::run(cfg),
    }
}

/// Phase-space point of a config entry; on-shell points take the largest
/// `q`-root.
pub fn resolve_point(spec: &PointSpec, params: &ModelParams) -> Result<PhasePoint> {
    match *spec {
        PointSpec::Explicit { point: [q, p, big_q, big_p] } => {
            let x = PhasePoint::new(q, p, big_q, big_p);
            x.check_bloch()?;
            Ok(x)
        }
        PointSpec::OnShell {
            epsilon,
            p,
            big_q,
            big_p,
        } => {
            PhasePoint::new(0.0, p, big_q, big_p).check_bloch()?;
            let root = shell_roots_q(p, big_q, big_p, epsilon, params)
                .last()
                .map(|r| r.q)
                .ok_or_else(|| HarnessError::Config(format!("(p, Q, P) = ({p}, {big_q}, {big_p}) has no point on the shell {epsilon}")))?;
            Ok(PhasePoint::new(root, p, big_q, big_p))
        }
    }
}

/// Seed for the `index`-th random object of a pipeline.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    StreamFactory::new(seed, tag).stream(index).next_u64()
}

/// Shell sample at `epsilon` and its density of states from the sample's
/// own volume estimate.
pub(crate) fn shell_at(epsilon: f64, draws: usize, cfg: &ExperimentConfig, tag: &str, index: u64) -> Result<(ShellSample, f64)> {
    let shell = sample_shell(epsilon, draws, derive_seed(cfg.seed, tag, index), &cfg.params)?;
    let (volume, _) = shell.volume(cfg.mc.n_batches);
    Ok((shell, volume / (4.0 * PI * PI)))
}

pub(crate) fn atomic_grid(cfg: &ExperimentConfig) -> Result<ProjectionGrid> {
    Ok(build_projection_grid(Plane::Atomic, cfg.grid.resolution, cfg.params.j(), None)?)
}

/// Starting cutoff for a spectrum that must resolve states up to `eps_max`.
///
/// On `{h_cl ≤ ε}` the oscillator radius obeys `ωr²/2 − 2γr − ω₀ ≤ ε`, so
/// the classical photon number is at most `j r²/4`; eigenvectors need about
/// 2.5 times that before the top of the truncation stops leaking into them.
/// In the efficient basis the radius is measured from the displaced centre,
/// where `ωr²/2 ≤ ε + ω₀ + 2γ²/ω`.
pub fn heuristic_n_max(params: &ModelParams, kind: BasisKind, eps_max: f64) -> usize {
    let (w, g) = (params.omega, params.gamma);
    let head = (eps_max + params.omega0).max(0.0);
    let r2 = match kind {
        BasisKind::Fock => ((2.0 * g + (4.0 * g * g + 2.0 * w * head).sqrt()) / w).powi(2),
        BasisKind::Efficient => 2.0 * (head + 2.0 * g * g / w) / w,
    };
    (2.5 * params.j() * r2 / 4.0).ceil() as usize + 40
}

/// Growth factor and number of attempts of the cutoff scan.
const SCAN_GROWTH: f64 = 1.25;
const SCAN_ATTEMPTS: usize = 4;

/// Loads or solves the spectrum and checks it with `check`.
///
/// Without a configured `n_max` the cutoff starts at [`heuristic_n_max`] and
/// grows until `check` passes; a configured or loaded spectrum that fails
/// the check is a convergence error.
pub(crate) fn obtain_spectrum(
    cfg: &ExperimentConfig,
    eps_max: f64,
    check: &dyn Fn(&Arc<Spectrum>) -> std::result::Result<(), String>,
) -> Result<Arc<Spectrum>> {
    if let Some(path) = &cfg.load_spectrum {
        let spec = Arc::new(Spectrum::load(path)?);
        if spec.params != cfg.params {
            return Err(HarnessError::Config(format!(
                "{} was computed for different model parameters",
                path.display()
            )));
        }
        check(&spec).map_err(HarnessError::Convergence)?;
        return Ok(spec);
    }
    let cutoffs: Vec<usize> = match cfg.basis.n_max {
        Some(n) => vec![n],
        None => {
            let mut n = heuristic_n_max(&cfg.params, cfg.basis.kind, eps_max) as f64;
            (0..SCAN_ATTEMPTS)
                .map(|_| {
                    let c = n.round() as usize;
                    n *= SCAN_GROWTH;
                    c
                })
                .collect()
        }
    };
    let mut last = String::new();
    for n_max in cutoffs {
        let tag = match cfg.basis.kind {
            BasisKind::Fock => BasisTag::Fock { n_max },
            BasisKind::Efficient => BasisTag::Efficient { n_max },
        };
        eprintln!("solving {:?} basis, n_max = {n_max}, dimension {}", cfg.basis.kind, tag.dim(&cfg.params));
        let spec = Arc::new(solve(&cfg.params, tag, &cfg.solve_options())?);
        match check(&spec) {
            Ok(()) => {
                if let Some(path) = &cfg.save_spectrum {
                    spec.save(path)?;
                }
                return Ok(spec);
            }
            Err(msg) => {
                eprintln!("n_max = {n_max}: {msg}");
                last = format!("n_max = {n_max}: {msg}");
            }
        }
    }
    Err(HarnessError::Convergence(last))
}

/// Fock truncation that holds the coherent states at `points` with room for
/// the convergence guard band.
pub(crate) fn coherent_context(params: &ModelParams, points: &[PhasePoint]) -> Result<FockContext> {
    let r2 = points.iter().map(|x| x.q * x.q + x.p * x.p).fold(0.0, f64::max);
    let mean = params.j() * r2 / 4.0;
    let n_max = (mean + 15.0 * mean.sqrt() + 50.0).ceil() as usize;
    Ok(FockContext::new(params, n_max)?)
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}
