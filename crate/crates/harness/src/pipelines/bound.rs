//! Rényi volumes of random pure states against the coherent-state lower
//! bound.

use dicke_core::model::FockBasisSpec;
use dicke_core::renyi::{coherent_lower_bound, renyi_volume_phase_space};
use dicke_core::rng::StreamFactory;
use dicke_core::states::{PureState, PureVector, QuantumState};
use dicke_core::stats::MonteCarloConfig;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{derive_seed, Outputs};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{write_summary, Table};

/// Violations are counted below `bound − BOUND_SIGMAS · stderr`.
pub const BOUND_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub alpha: f64,
    pub bound: f64,
    pub min_volume: f64,
    pub violations: usize,
}

/// Pure state with independent complex Gaussian Fock coefficients, which
/// is Haar-distributed on the truncated space.
pub fn random_state(basis: FockBasisSpec, seed: u64, index: u64) -> Result<PureVector> {
    let mut rng = StreamFactory::new(seed, "random_state").stream(index);
    let coeffs: Vec<Complex64> = (0..basis.dim())
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    Ok(PureVector::normalized(basis, coeffs)?)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    let params = &cfg.params;
    let bc = &cfg.bound;
    let basis = FockBasisSpec::new(params, bc.n_max);
    let path = cfg.out_dir.join("bound.csv");
    let mut table = Table::create(&path, &["state", "alpha", "V", "V_stderr", "bound", "violated"], cfg)?;
    let mut stats = Vec::new();
    for &alpha in &cfg.alphas {
        let bound = coherent_lower_bound(alpha, params.hbar_eff())?;
        let mut min_volume = f64::INFINITY;
        let mut violations = 0;
        for i in 0..bc.n_states {
            let psi = random_state(basis, cfg.seed, i as u64)?;
            let mc = MonteCarloConfig {
                n_samples: bc.samples,
                n_batches: cfg.mc.n_batches,
                seed: derive_seed(cfg.seed, "bound", i as u64),
            };
            let v = renyi_volume_phase_space(&QuantumState::Pure(PureState::Fock(psi)), alpha, &mc, params, None)?;
            let violated = v.value < bound - BOUND_SIGMAS * v.stderr;
            violations += violated as usize;
            min_volume = min_volume.min(v.value);
            table.row(vec![i.into(), alpha.into(), v.value.into(), v.stderr.into(), bound.into(), violated.into()])?;
        }
        stats.push(BoundSummary {
            alpha,
            bound,
            min_volume,
            violations,
        });
    }
    let summary = serde_json::json!({ "n_states": bc.n_states, "n_max": bc.n_max, "alphas": stats });
    Ok(Outputs {
        tables: vec![table.finish()?],
        summary: write_summary(&cfg.out_dir, "bound", cfg, &summary)?,
    })
}
