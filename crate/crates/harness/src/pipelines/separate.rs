//! Occupations of pair mixtures `(|x><x| + |y><y|)/2` against their
//! separation, relative to the single state.

use dicke_core::classical::h_cl;
use dicke_core::renyi::{occupation_atomic, occupation_shell};
use dicke_core::states::{energy_moments, separation_family, QuantumState, SeparationMode};
use serde::Serialize;

use super::evolve::point_json;
use super::{atomic_grid, coherent_context, resolve_point, shell_at, Outputs};
use crate::config::{ExperimentConfig, ModeConfig};
use crate::error::Result;
use crate::output::{write_summary, Table};

#[derive(Debug, Clone, Serialize)]
pub struct RatioSummary {
    pub alpha: f64,
    pub reference_atomic: f64,
    pub reference_shell: f64,
    pub atomic_ratio_min: f64,
    pub atomic_ratio_max: f64,
    pub shell_ratio_final: f64,
    pub shell_ratio_max: f64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    let params = &cfg.params;
    let sc = &cfg.separate;
    let x = resolve_point(&sc.reference, params)?;
    let eps = h_cl(&x, params)?;
    let mode = match sc.mode {
        ModeConfig::Atomic => SeparationMode::Atomic,
        ModeConfig::Bosonic => SeparationMode::Bosonic,
    };
    let family = separation_family(&x, mode, eps, &sc.d_grid, sc.direction, params, None)?;
    let grid = atomic_grid(cfg)?;
    let (shell, nu) = shell_at(eps, cfg.mc.coherent_shell_draws, cfg, "separate", 0)?;
    let reference = QuantumState::coherent(x, params)?;
    let ctx = if sc.sigma {
        let mut pts = vec![x];
        pts.extend(family.iter().map(|m| m.y));
        Some(coherent_context(params, &pts)?)
    } else {
        None
    };

    let path = cfg.out_dir.join("separate.csv");
    let mut table = Table::create(
        &path,
        &["D", "D_achieved", "alpha", "atomic_ratio", "shell_ratio", "shell_ratio_stderr", "L_atomic", "L_shell", "epsilon_y", "sigma"],
        cfg,
    )?;
    let mut stats = Vec::new();
    for &alpha in &cfg.alphas {
        let la0 = occupation_atomic(&reference, alpha, &grid, params)?.value;
        let le0 = occupation_shell(&reference, alpha, &shell, nu, cfg.mc.n_batches)?;
        let mut atomic_ratios = Vec::new();
        let mut shell_ratios = Vec::new();
        for m in &family {
            let la = occupation_atomic(&m.state, alpha, &grid, params)?.value;
            let le = occupation_shell(&m.state, alpha, &shell, nu, cfg.mc.n_batches)?;
            let sigma = match &ctx {
                Some(c) => energy_moments(&m.state, c)?.1,
                None => f64::NAN,
            };
            let (ra, rs) = (la / la0, le.value / le0.value);
            table.row(vec![
                m.target_d.into(),
                m.achieved_d.into(),
                alpha.into(),
                ra.into(),
                rs.into(),
                (rs * le.stderr / le.value).into(),
                la.into(),
                le.value.into(),
                m.epsilon_y.into(),
                sigma.into(),
            ])?;
            atomic_ratios.push(ra);
            shell_ratios.push(rs);
        }
        stats.push(RatioSummary {
            alpha,
            reference_atomic: la0,
            reference_shell: le0.value,
            atomic_ratio_min: atomic_ratios.iter().copied().fold(f64::INFINITY, f64::min),
            atomic_ratio_max: atomic_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            shell_ratio_final: shell_ratios.last().copied().unwrap_or(f64::NAN),
            shell_ratio_max: shell_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let summary = serde_json::json!({
        "reference": point_json(&x),
        "epsilon": eps,
        "mode": sc.mode,
        "nu": nu,
        "alphas": stats,
    });
    Ok(Outputs {
        tables: vec![table.finish()?],
        summary: write_summary(&cfg.out_dir, "separate", cfg, &summary)?,
    })
}
