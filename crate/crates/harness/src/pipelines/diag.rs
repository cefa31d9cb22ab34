//! Spectrum with convergence flags.

use dicke_core::classical::ground_state_energy;
use serde_json::json;

use super::{obtain_spectrum, Outputs};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{write_summary, Table};

/// Energy up to which the default cutoff resolves the spectrum.
const DIAG_EPS_MAX: f64 = 1.0;

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    let spec = obtain_spectrum(cfg, DIAG_EPS_MAX, &|_| Ok(()))?;
    let path = cfg.out_dir.join("diag.csv");
    let mut t = Table::create(&path, &["k", "epsilon", "converged"], cfg)?;
    let eps = spec.scaled_energies();
    for (k, (&e, &c)) in eps.iter().zip(&spec.converged).enumerate() {
        t.row(vec![k.into(), e.into(), c.into()])?;
    }
    let tables = vec![t.finish()?];
    let first_unconverged = spec.converged.iter().position(|c| !c);
    let summary = json!({
        "dimension": spec.dim(),
        "n_states": spec.len(),
        "n_converged": spec.converged_count(),
        "converged_prefix": first_unconverged.unwrap_or(spec.len()),
        "epsilon_first_unconverged": first_unconverged.map(|k| eps[k]),
        "epsilon_ground": eps.first(),
        "epsilon_ground_classical": ground_state_energy(&cfg.params).0,
        "orthonormality_error": spec.orthonormality_error(),
    });
    Ok(Outputs {
        tables,
        summary: write_summary(&cfg.out_dir, "diag", cfg, &summary)?,
    })
}
