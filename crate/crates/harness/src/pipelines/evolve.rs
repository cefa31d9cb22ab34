//! Instantaneous and time-averaged occupations of an evolving coherent
//! state.

use dicke_core::classical::{h_cl, PhasePoint};
use dicke_core::husimi::{write_heatmap, EigenAmplitudes, Projector};
use dicke_core::renyi::{occupation_atomic_from_values, occupation_shell_from_values};
use dicke_core::states::{eigen_expansion, energy_moments, time_average_kernel, PureState, QuantumState};
use serde::Serialize;

use super::{atomic_grid, coherent_context, mean_std, obtain_spectrum, resolve_point, shell_at, Outputs};
use crate::config::{BasisKind, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::output::{write_summary, Table};

/// Energy widths of the initial state kept below the top of the converged
/// spectrum.
const COVERAGE_WIDTHS: f64 = 6.0;

/// Instantaneous values at `t ≥ PLATEAU_FRACTION · t_max` form the
/// late-time plateau.
pub const PLATEAU_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub plateau_atomic: f64,
    pub plateau_atomic_std: f64,
    pub plateau_shell: f64,
    pub plateau_shell_std: f64,
    /// Time-averaged values at the largest averaging time.
    pub averaged_atomic: Option<f64>,
    pub averaged_shell: Option<f64>,
    /// Occupations of the initial coherent state evaluated in closed form.
    pub coherent_atomic: f64,
    pub coherent_shell: f64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    if cfg.basis.kind != BasisKind::Fock {
        return Err(HarnessError::Config("evolve needs a Fock-basis spectrum".into()));
    }
    let params = &cfg.params;
    let ev = &cfg.evolve;
    let x = resolve_point(&ev.initial, params)?;
    let eps_x = h_cl(&x, params)?;
    let coherent = QuantumState::coherent(x, params)?;
    let (_, sigma) = energy_moments(&coherent, &coherent_context(params, &[x])?)?;
    let spec = obtain_spectrum(cfg, eps_x + COVERAGE_WIDTHS * sigma, &|s| {
        eigen_expansion(&x, s).map(|_| ()).map_err(|e| e.to_string())
    })?;
    let expansion = eigen_expansion(&x, &spec)?.significant(ev.discard);
    eprintln!("evolve: {} eigenstates carry the initial state", expansion.indices.len());

    let grid = atomic_grid(cfg)?;
    let projector = Projector::new(&grid, &spec.fock_basis()?);
    let c_atomic = 4.0 * std::f64::consts::PI / (2.0 * params.j() + 1.0);
    let (shell, nu) = shell_at(eps_x, cfg.mc.shell_draws, cfg, "evolve", 0)?;
    let amps = EigenAmplitudes::new(&spec, &expansion.indices, &shell.points)?;

    let columns = ["time", "alpha", "L_atomic", "L_shell", "L_shell_stderr"];
    let inst_path = cfg.out_dir.join("evolve_instantaneous.csv");
    let mut inst = Table::create(&inst_path, &columns, cfg)?;
    let mut tables = Vec::new();
    let mut late: Vec<Vec<(f64, f64)>> = vec![Vec::new(); cfg.alphas.len()];
    let t_max = ev.times.iter().copied().fold(0.0, f64::max);
    for &t in &ev.times {
        let psi = expansion.evolved(t);
        let shell_values = amps.pure(&psi.coeffs);
        let projection = projector.project(&QuantumState::Pure(PureState::Eigen(psi)))?;
        for (a, &alpha) in cfg.alphas.iter().enumerate() {
            let la = occupation_atomic_from_values(&grid, &projection, alpha, c_atomic)?;
            let le = occupation_shell_from_values(&shell_values, alpha, &shell, nu, cfg.mc.n_batches)?;
            inst.row(vec![t.into(), alpha.into(), la.value.into(), le.value.into(), le.stderr.into()])?;
            if t >= PLATEAU_FRACTION * t_max {
                late[a].push((la.value, le.value));
            }
        }
        if ev.heatmap_times.iter().any(|&h| (h - t).abs() <= 1e-12 * t.abs().max(1.0)) {
            let stem = format!("evolve_heatmap_t{t}");
            let csv = cfg.out_dir.join(format!("{stem}.csv"));
            write_heatmap(&csv, &cfg.out_dir.join(format!("{stem}.json")), &grid, &projection, &format!("evolved coherent state, t = {t}"))?;
            tables.push(csv);
        }
    }
    tables.insert(0, inst.finish()?);

    let avg_path = cfg.out_dir.join("evolve_averaged.csv");
    let mut avg = Table::create(&avg_path, &columns, cfg)?;
    let mut last_avg: Vec<Option<(f64, f64)>> = vec![None; cfg.alphas.len()];
    let mut averaging: Vec<f64> = ev.averaging_times.clone();
    averaging.sort_by(f64::total_cmp);
    for &t_avg in &averaging {
        let rho = time_average_kernel(&expansion, t_avg)?;
        let shell_values = amps.averaged(&rho.density_matrix());
        let projection = projector.project(&QuantumState::TimeAveraged(rho))?;
        for (a, &alpha) in cfg.alphas.iter().enumerate() {
            let la = occupation_atomic_from_values(&grid, &projection, alpha, c_atomic)?;
            let le = occupation_shell_from_values(&shell_values, alpha, &shell, nu, cfg.mc.n_batches)?;
            avg.row(vec![t_avg.into(), alpha.into(), la.value.into(), le.value.into(), le.stderr.into()])?;
            last_avg[a] = Some((la.value, le.value));
        }
        eprintln!("evolve: averaged over T = {t_avg}");
    }
    tables.insert(1, avg.finish()?);

    let coherent_projection = projector.project(&coherent)?;
    let coherent_shell = dicke_core::husimi::husimi_many(&coherent, &shell.points)?;
    let mut per_alpha = Vec::new();
    for (a, &alpha) in cfg.alphas.iter().enumerate() {
        let atomic: Vec<f64> = late[a].iter().map(|v| v.0).collect();
        let on_shell: Vec<f64> = late[a].iter().map(|v| v.1).collect();
        let (pa, pa_std) = mean_std(&atomic);
        let (ps, ps_std) = mean_std(&on_shell);
        per_alpha.push(AlphaSummary {
            alpha,
            plateau_atomic: pa,
            plateau_atomic_std: pa_std,
            plateau_shell: ps,
            plateau_shell_std: ps_std,
            averaged_atomic: last_avg[a].map(|v| v.0),
            averaged_shell: last_avg[a].map(|v| v.1),
            coherent_atomic: occupation_atomic_from_values(&grid, &coherent_projection, alpha, c_atomic)?.value,
            coherent_shell: occupation_shell_from_values(&coherent_shell, alpha, &shell, nu, cfg.mc.n_batches)?.value,
        });
    }
    let summary = serde_json::json!({
        "initial": point_json(&x),
        "epsilon": eps_x,
        "sigma": sigma,
        "n_max": spec.basis.n_max(),
        "n_eigenstates": expansion.indices.len(),
        "nu": nu,
        "plateau_from": PLATEAU_FRACTION * t_max,
        "alphas": per_alpha,
    });
    Ok(Outputs {
        tables,
        summary: write_summary(&cfg.out_dir, "evolve", cfg, &summary)?,
    })
}

pub(crate) fn point_json(x: &PhasePoint) -> serde_json::Value {
    serde_json::json!({"q": x.q, "p": x.p, "Q": x.Q, "P": x.P})
}
