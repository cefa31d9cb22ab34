//! Energy profiles `C_ε` of eigenstates and coherent states.

use std::sync::Arc;

use dicke_core::classical::{ground_state_energy, h_cl, ShellSample};
use dicke_core::renyi::energy_profile;
use dicke_core::states::{EigenVector, PureState, QuantumState};
use serde::Serialize;

use super::{obtain_spectrum, resolve_point, shell_at, Outputs};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{write_summary, Table};

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub state: String,
    /// Eigenenergy or classical energy of the state.
    pub epsilon: f64,
    pub peak_epsilon: f64,
    pub peak_c: f64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    let params = &cfg.params;
    let pc = &cfg.profile;
    let ground = ground_state_energy(params).0;
    // The shell is empty at and below the ground-state energy.
    let energies: Vec<f64> = pc.epsilon_grid.iter().copied().filter(|&e| e > ground).collect();
    let shells: Vec<ShellSample> = energies
        .iter()
        .enumerate()
        .map(|(i, &e)| Ok(shell_at(e, cfg.mc.shell_draws, cfg, "profile", i as u64)?.0))
        .collect::<Result<_>>()?;

    let mut states: Vec<(String, f64, QuantumState)> = Vec::new();
    if !pc.eigenstates.is_empty() {
        let k_max = *pc.eigenstates.iter().max().expect("non-empty");
        let eps_max = energies.iter().copied().fold(ground, f64::max);
        let spec = obtain_spectrum(cfg, eps_max, &|s| {
            if k_max >= s.len() || !s.converged[k_max] || pc.eigenstates.iter().any(|&k| !s.converged[k]) {
                Err(format!("eigenstates up to {k_max} are not all converged"))
            } else {
                Ok(())
            }
        })?;
        for &k in &pc.eigenstates {
            let e = spec.scaled_energy(k);
            states.push((format!("eigenstate {k}"), e, QuantumState::Pure(PureState::Eigen(EigenVector::eigenstate(Arc::clone(&spec), k)))));
        }
    }
    for (i, point) in pc.coherent.iter().enumerate() {
        let x = resolve_point(point, params)?;
        states.push((format!("coherent {i}"), h_cl(&x, params)?, QuantumState::coherent(x, params)?));
    }
    if states.is_empty() {
        return Err(HarnessError::Config("profile needs at least one eigenstate or coherent state".into()));
    }

    let path = cfg.out_dir.join("profile.csv");
    let mut table = Table::create(&path, &["state", "state_epsilon", "epsilon", "C", "C_stderr"], cfg)?;
    let mut stats = Vec::new();
    for (label, e, state) in &states {
        let profile = energy_profile(state, &shells, cfg.mc.n_batches)?;
        for pt in &profile {
            table.row(vec![label.as_str().into(), (*e).into(), pt.epsilon.into(), pt.c.into(), pt.stderr.into()])?;
        }
        let peak = profile.iter().max_by(|a, b| a.c.total_cmp(&b.c));
        stats.push(ProfileSummary {
            state: label.clone(),
            epsilon: *e,
            peak_epsilon: peak.map_or(f64::NAN, |p| p.epsilon),
            peak_c: peak.map_or(f64::NAN, |p| p.c),
        });
    }
    let summary = serde_json::json!({ "epsilon_ground": ground, "states": stats });
    Ok(Outputs {
        tables: vec![table.finish()?],
        summary: write_summary(&cfg.out_dir, "profile", cfg, &summary)?,
    })
}
