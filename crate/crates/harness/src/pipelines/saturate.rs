//! Occupations of growing equal mixtures of coherent states spread over the
//! Bloch disk on one energy shell.

use dicke_core::renyi::{occupation_atomic, occupation_shell};
use dicke_core::states::{default_saturation_size, saturate_bloch};
use serde::Serialize;

use super::{atomic_grid, shell_at, Outputs};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{write_summary, Table};

#[derive(Debug, Clone, Serialize)]
pub struct SaturationSummary {
    pub alpha: f64,
    pub first_atomic: f64,
    pub final_atomic: f64,
    pub final_shell: f64,
    pub final_shell_stderr: f64,
    /// Largest drop of the atomic occupation between consecutive sizes.
    pub max_atomic_drop: f64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    let params = &cfg.params;
    let sc = &cfg.saturate;
    let n_full = sc.n_full.unwrap_or_else(|| default_saturation_size(params));
    let grid = atomic_grid(cfg)?;
    let (shell, nu) = shell_at(sc.epsilon, cfg.mc.coherent_shell_draws, cfg, "saturate", 0)?;
    let path = cfg.out_dir.join("saturate.csv");
    let mut table = Table::create(&path, &["n", "alpha", "L_atomic", "L_shell", "L_shell_stderr"], cfg)?;
    let mut rows: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); cfg.alphas.len()];
    for &n in &sc.n_grid {
        let state = saturate_bloch(n, sc.epsilon, n_full, cfg.seed, params)?;
        for (a, &alpha) in cfg.alphas.iter().enumerate() {
            let la = occupation_atomic(&state, alpha, &grid, params)?.value;
            let le = occupation_shell(&state, alpha, &shell, nu, cfg.mc.n_batches)?;
            table.row(vec![n.into(), alpha.into(), la.into(), le.value.into(), le.stderr.into()])?;
            rows[a].push((la, le.value, le.stderr));
        }
    }
    let stats: Vec<SaturationSummary> = cfg
        .alphas
        .iter()
        .zip(&rows)
        .map(|(&alpha, r)| {
            let last = r.last().copied().unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            SaturationSummary {
                alpha,
                first_atomic: r.first().map_or(f64::NAN, |v| v.0),
                final_atomic: last.0,
                final_shell: last.1,
                final_shell_stderr: last.2,
                max_atomic_drop: r.windows(2).map(|w| w[0].0 - w[1].0).fold(0.0, f64::max),
            }
        })
        .collect();
    let summary = serde_json::json!({
        "epsilon": sc.epsilon,
        "n_full": n_full,
        "nu": nu,
        "alphas": stats,
    });
    Ok(Outputs {
        tables: vec![table.finish()?],
        summary: write_summary(&cfg.out_dir, "saturate", cfg, &summary)?,
    })
}
