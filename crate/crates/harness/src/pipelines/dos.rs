//! Density of states from shell sampling against the finite difference of
//! the phase-space volume.

use dicke_core::classical::{density_from_volume, density_of_states};
use dicke_core::stats::MonteCarloConfig;
use serde::Serialize;

use super::{derive_seed, Outputs};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{write_summary, Table};

#[derive(Debug, Clone, Serialize)]
pub struct DosPoint {
    pub epsilon: f64,
    pub nu: f64,
    pub nu_stderr: f64,
    pub nu_fd: f64,
    pub nu_fd_stderr: f64,
    pub relative_difference: f64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    let dc = &cfg.dos;
    let path = cfg.out_dir.join("dos.csv");
    let mut table = Table::create(
        &path,
        &["epsilon", "nu", "nu_stderr", "nu_fd", "nu_fd_stderr", "relative_difference"],
        cfg,
    )?;
    let mut points = Vec::new();
    for (i, &e) in dc.epsilons.iter().enumerate() {
        let mc = |n, tag| MonteCarloConfig {
            n_samples: n,
            n_batches: cfg.mc.n_batches,
            seed: derive_seed(cfg.seed, tag, i as u64),
        };
        let (nu, se) = density_of_states(e, &cfg.params, &mc(cfg.mc.volume_samples, "dos"))?;
        let (fd, fd_se) = density_from_volume(e, dc.delta, &cfg.params, &mc(dc.fd_samples, "dos_fd"))?;
        let rel = (nu - fd).abs() / fd;
        table.row(vec![e.into(), nu.into(), se.into(), fd.into(), fd_se.into(), rel.into()])?;
        points.push(DosPoint {
            epsilon: e,
            nu,
            nu_stderr: se,
            nu_fd: fd,
            nu_fd_stderr: fd_se,
            relative_difference: rel,
        });
    }
    let worst = points.iter().map(|p| p.relative_difference).fold(0.0, f64::max);
    let summary = serde_json::json!({ "points": points, "max_relative_difference": worst });
    Ok(Outputs {
        tables: vec![table.finish()?],
        summary: write_summary(&cfg.out_dir, "dos", cfg, &summary)?,
    })
}
