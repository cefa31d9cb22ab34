//! Rényi occupations of the eigenstates in an index or energy window.

use std::sync::Arc;

use dicke_core::husimi::{projection_basis, EigenAmplitudes, Projector};
use dicke_core::model::Spectrum;
use dicke_core::renyi::{occupation_atomic_from_values, occupation_shell_from_values};
use dicke_core::states::{EigenVector, PureState, QuantumState};
use num_complex::Complex64;
use serde::Serialize;

use super::{atomic_grid, mean_std, obtain_spectrum, shell_at, Outputs};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{write_summary, Table};

#[derive(Debug, Clone, Serialize)]
pub struct WindowStats {
    pub alpha: f64,
    pub n_states: usize,
    pub mean_atomic: f64,
    pub std_atomic: f64,
    pub mean_shell: f64,
    pub std_shell: f64,
}

/// Indices in the configured window. An index window reaching past the
/// computed states or covering unconverged ones is an error.
fn window(cfg: &ExperimentConfig, spec: &Spectrum) -> std::result::Result<Vec<usize>, String> {
    let ks: Vec<usize> = match cfg.eigstats.k_window {
        Some([a, b]) => {
            if b >= spec.len() {
                return Err(format!("k window ends at {b} but only {} states were computed", spec.len()));
            }
            (a..=b).collect()
        }
        None => {
            let [lo, hi] = cfg.eigstats.epsilon_window;
            let eps = spec.scaled_energies();
            (0..spec.len()).filter(|&k| eps[k] > lo && eps[k] < hi).collect()
        }
    };
    if let Some(&k) = ks.iter().find(|&&k| !spec.converged[k]) {
        return Err(format!("eigenstate {k} in the window is not converged"));
    }
    Ok(ks)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    let [_, eps_hi] = cfg.eigstats.epsilon_window;
    let spec: Arc<Spectrum> = obtain_spectrum(cfg, eps_hi, &|s| window(cfg, s).map(|_| ()))?;
    let ks = window(cfg, &spec).map_err(HarnessError::Convergence)?;
    let eps = spec.scaled_energies();
    let params = &cfg.params;
    let grid = atomic_grid(cfg)?;
    let projector = Projector::new(&grid, &projection_basis(&spec));
    let c_atomic = 4.0 * std::f64::consts::PI / (2.0 * params.j() + 1.0);
    let one = [Complex64::new(1.0, 0.0)];

    let path = cfg.out_dir.join("eigstats.csv");
    let mut table = Table::create(&path, &["k", "epsilon", "alpha", "L_atomic", "L_shell", "L_shell_stderr"], cfg)?;
    // values[alpha][state] = (L_A, L_ε)
    let mut values = vec![Vec::with_capacity(ks.len()); cfg.alphas.len()];
    for (i, &k) in ks.iter().enumerate() {
        let state = QuantumState::Pure(PureState::Eigen(EigenVector::eigenstate(spec.clone(), k)));
        let projection = projector.project(&state)?;
        let (shell, nu) = shell_at(eps[k], cfg.mc.shell_draws, cfg, "eigstats", k as u64)?;
        let husimi = EigenAmplitudes::new(&spec, &[k], &shell.points)?.pure(&one);
        for (a, &alpha) in cfg.alphas.iter().enumerate() {
            let la = occupation_atomic_from_values(&grid, &projection, alpha, c_atomic)?;
            let le = occupation_shell_from_values(&husimi, alpha, &shell, nu, cfg.mc.n_batches)?;
            table.row(vec![k.into(), eps[k].into(), alpha.into(), la.value.into(), le.value.into(), le.stderr.into()])?;
            values[a].push((la.value, le.value));
        }
        if (i + 1) % 25 == 0 {
            eprintln!("eigstats: {} / {} states", i + 1, ks.len());
        }
    }
    let mut tables = vec![table.finish()?];

    let hist_path = cfg.out_dir.join("eigstats_hist.csv");
    let mut hist = Table::create(&hist_path, &["alpha", "measure", "bin_lo", "bin_hi", "count", "cumulative"], cfg)?;
    let bins = cfg.eigstats.bins.max(1);
    let mut stats = Vec::new();
    for (a, &alpha) in cfg.alphas.iter().enumerate() {
        let atomic: Vec<f64> = values[a].iter().map(|v| v.0).collect();
        let shell: Vec<f64> = values[a].iter().map(|v| v.1).collect();
        for (name, xs) in [("atomic", &atomic), ("shell", &shell)] {
            let counts = histogram(xs, bins);
            let mut acc = 0usize;
            for (b, &c) in counts.iter().enumerate() {
                acc += c;
                let cumulative = if xs.is_empty() { 0.0 } else { acc as f64 / xs.len() as f64 };
                hist.row(vec![
                    alpha.into(),
                    name.into(),
                    (b as f64 / bins as f64).into(),
                    ((b + 1) as f64 / bins as f64).into(),
                    c.into(),
                    cumulative.into(),
                ])?;
            }
        }
        let (mean_atomic, std_atomic) = mean_std(&atomic);
        let (mean_shell, std_shell) = mean_std(&shell);
        stats.push(WindowStats {
            alpha,
            n_states: ks.len(),
            mean_atomic,
            std_atomic,
            mean_shell,
            std_shell,
        });
    }
    tables.push(hist.finish()?);
    let summary = serde_json::json!({
        "k_first": ks.first(),
        "k_last": ks.last(),
        "epsilon_first": ks.first().map(|&k| eps[k]),
        "epsilon_last": ks.last().map(|&k| eps[k]),
        "n_max": spec.basis.n_max(),
        "windows": stats,
    });
    Ok(Outputs {
        tables,
        summary: write_summary(&cfg.out_dir, "eigstats", cfg, &summary)?,
    })
}

/// Counts in `bins` equal bins on `[0, 1]`; values above 1 (Monte Carlo
/// noise) go to the last bin.
fn histogram(xs: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &x in xs {
        let b = ((x.max(0.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_clamps_to_unit_interval() {
        assert_eq!(histogram(&[0.0, 0.05, 0.5, 0.999, 1.0, 1.2, -0.1], 10), vec![3, 0, 0, 0, 0, 1, 0, 0, 0, 3]);
    }
}
