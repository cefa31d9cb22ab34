//! Rényi volumes and occupations.
//!
//! `V_α = (∫dV φ^α)^{1/(1−α)}` for a probability density `φ`, and
//! `L_α = V_α / V(X)` when the reference space `X` is bounded.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classical::{uniform_disk, PhasePoint, ShellSample};
use crate::error::{Error, Result};
use crate::husimi::{HusimiEvaluator, ProjectionGrid, Projector};
use crate::model::{ln_factorials, FockBasisSpec, ModelParams};
use crate::rng::StreamFactory;
use crate::states::{PureState, PureVector, QuantumState};
use crate::stats::{batched_sums, BatchEstimate, MonteCarloConfig};

/// Husimi mass that a Monte Carlo bounding region must capture.
pub const REQUIRED_CAPTURE: f64 = 1.0 - 1e-6;

/// Mass left outside automatically chosen regions.
const AUTO_TAIL: f64 = 1e-7;

/// Default orders; α = 2 is the headline value.
pub const DEFAULT_ALPHAS: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

/// How an occupation was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum OccupationConfig {
    Grid {
        resolution: usize,
        n_nodes: usize,
    },
    MonteCarlo {
        n_samples: usize,
        n_batches: usize,
        seed: u64,
        region: String,
    },
    Shell {
        epsilon: f64,
        n_draws: usize,
        n_points: usize,
        n_batches: usize,
        seed: u64,
        nu: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationResult {
    pub value: f64,
    pub alpha: f64,
    /// `None` for volumes over the unbounded phase space.
    pub reference_volume: Option<f64>,
    pub normalization: f64,
    pub stderr: f64,
    pub config: OccupationConfig,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be finite and non-negative, got {alpha}")));
    }
    Ok(())
}

/// `V_α` of a discrete density `φ_i` over cells of measure `μ_i`, with
/// `Σ μ_i φ_i = 1`.
pub fn renyi_volume_weighted(density: &[f64], measure: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if density.len() != measure.len() {
        return Err(Error::DimensionMismatch {
            expected: measure.len(),
            found: density.len(),
        });
    }
    let mut total = 0.0;
    for (&f, &m) in density.iter().zip(measure) {
        if !(f >= 0.0) || !f.is_finite() {
            return Err(Error::InvalidProbability(f));
        }
        if !(m > 0.0) {
            return Err(Error::InvalidArgument(format!("cell measure must be positive, got {m}")));
        }
        total += f * m;
    }
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Unnormalized(total));
    }
    let pairs = density.iter().zip(measure).filter(|(&f, _)| f > 0.0);
    Ok(if alpha == 0.0 {
        pairs.map(|(_, m)| m).sum()
    } else if alpha == 1.0 {
        (-pairs.map(|(f, m)| m * f * f.ln()).sum::<f64>()).exp()
    } else {
        pairs.map(|(f, m)| m * f.powf(alpha)).sum::<f64>().powf(1.0 / (1.0 - alpha))
    })
}

/// `(Σ p_i^α)^{1/(1−α)}`; the Shannon exponential at α = 1 and the support
/// size at α = 0.
pub fn renyi_volume_discrete(probabilities: &[f64], alpha: f64) -> Result<f64> {
    renyi_volume_weighted(probabilities, &vec![1.0; probabilities.len()], alpha)
}

/// Volume from the normalization `c` and `i = ∫Q^α` (or `∫Q ln Q` at
/// α = 1), with the gradient with respect to `(c, i)`.
fn volume_from_integrals(c: f64, i: f64, alpha: f64) -> (f64, [f64; 2]) {
    if alpha == 1.0 {
        let v = c * (-i / c).exp();
        (v, [v * (1.0 / c + i / (c * c)), -v / c])
    } else {
        let v = c.powf(alpha / (alpha - 1.0)) * i.powf(1.0 / (1.0 - alpha));
        (v, [v * alpha / ((alpha - 1.0) * c), v / ((1.0 - alpha) * i)])
    }
}

fn integrand(q: f64, alpha: f64) -> f64 {
    if q <= 0.0 {
        0.0
    } else if alpha == 1.0 {
        q * q.ln()
    } else {
        q.powf(alpha)
    }
}

/// `Σ_n Σ_k |ψ_{n,k}|²` per photon number.
fn photon_distribution(v: &PureVector) -> Vec<f64> {
    let na = v.basis.atomic_dim();
    v.coeffs.chunks(na).map(|row| row.iter().map(|c| c.norm_sqr()).sum()).collect()
}

/// `P(Poisson(mean) ≤ n)` for all `n ≤ n_max`.
fn poisson_cdf(mean: f64, n_max: usize) -> Vec<f64> {
    let lnf = ln_factorials(n_max);
    let lm = if mean > 0.0 { mean.ln() } else { f64::NEG_INFINITY };
    let mut acc = 0.0;
    (0..=n_max)
        .map(|n| {
            let term = if n == 0 { (-mean).exp() } else { (-mean + n as f64 * lm - lnf[n]).exp() };
            acc += term;
            acc.min(1.0)
        })
        .collect()
}

/// Husimi mass outside the centred disk of radius `r` in `(q, p)` for a
/// photon distribution `w`.
fn photon_tail(w: &[f64], j: f64, r: f64) -> f64 {
    let cdf = poisson_cdf(0.5 * j * r * r, w.len().saturating_sub(1));
    w.iter().zip(&cdf).map(|(a, b)| a * b).sum()
}

fn photon_radius(w: &[f64], j: f64) -> f64 {
    let mut r = 0.5;
    while photon_tail(w, j, r) > AUTO_TAIL {
        r += 0.05;
    }
    r
}

/// Photon distribution of `ρ̄ = E M Eᵀ`.
fn averaged_photon_distribution(basis: &FockBasisSpec, e: &Array2<f64>, m: &Array2<Complex64>) -> Vec<f64> {
    let er = e.dot(&m.mapv(|c| c.re));
    let na = basis.atomic_dim();
    let mut w = vec![0.0; basis.n_max + 1];
    for ((r, k), x) in er.indexed_iter() {
        w[r / na] += x * e[[r, k]];
    }
    w
}

/// Region over which the 4-D integral is sampled.
#[derive(Debug, Clone, Copy)]
enum Region {
    /// Centred `(q, p)` box times the Bloch disk.
    Fock { half_width: f64 },
    /// Box around a coherent centroid times a spherical cap around its
    /// `(Q, P)`.
    Coherent { centre: PhasePoint, half_width: f64, cap_u: f64 },
    /// Axis-aligned `(q, p)` box times the Bloch disk.
    Box { lo: [f64; 2], hi: [f64; 2] },
}

/// Unit vector of a Bloch-disk point under the equal-area map
/// `Z² = 2(1 − cos θ)`, `dQ dP = d cos θ dφ`.
#[allow(non_snake_case)]
fn disk_to_sphere(Q: f64, P: f64) -> [f64; 3] {
    let z2 = Q * Q + P * P;
    let u = 1.0 - 0.5 * z2;
    let s = (1.0 - 0.25 * z2).max(0.0).sqrt();
    [Q * s, P * s, u]
}

fn sphere_to_disk(n: [f64; 3]) -> (f64, f64) {
    let rho = (n[0] * n[0] + n[1] * n[1]).sqrt();
    let z = (2.0 * (1.0 - n[2].clamp(-1.0, 1.0))).sqrt();
    if rho == 0.0 {
        return (z, 0.0);
    }
    (z * n[0] / rho, z * n[1] / rho)
}

/// Point at polar angle `acos(u)` and azimuth `phi` around the axis `c`.
fn around_axis(c: [f64; 3], u: f64, phi: f64) -> [f64; 3] {
    let helper = if c[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let mut e1 = cross(helper, c);
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1 = e1.map(|x| x / n1);
    let e2 = cross(c, e1);
    let s = (1.0 - u * u).max(0.0).sqrt();
    let (sp, cp) = phi.sin_cos();
    std::array::from_fn(|i| u * c[i] + s * (cp * e1[i] + sp * e2[i]))
}

impl Region {
    fn volume(&self) -> f64 {
        match *self {
            Region::Fock { half_width } => 4.0 * PI * (2.0 * half_width).powi(2),
            Region::Coherent { half_width, cap_u, .. } => 2.0 * PI * (1.0 - cap_u) * (2.0 * half_width).powi(2),
            Region::Box { lo, hi } => 4.0 * PI * (hi[0] - lo[0]) * (hi[1] - lo[1]),
        }
    }

    fn describe(&self) -> String {
        match *self {
            Region::Fock { half_width } => format!("(q,p) in [-{half_width},{half_width}]^2; (Q,P) on the Bloch disk"),
            Region::Coherent { centre, half_width, cap_u } => format!(
                "(q,p) within {half_width} of ({},{}); (Q,P) in the cap cos>={cap_u} around ({},{})",
                centre.q, centre.p, centre.Q, centre.P
            ),
            Region::Box { lo, hi } => format!("(q,p) in [{},{}]x[{},{}]; (Q,P) on the Bloch disk", lo[0], hi[0], lo[1], hi[1]),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> PhasePoint {
        match *self {
            Region::Fock { half_width } => {
                let (big_q, big_p) = uniform_disk(rng);
                let q = half_width * (2.0 * rng.random::<f64>() - 1.0);
                let p = half_width * (2.0 * rng.random::<f64>() - 1.0);
                PhasePoint::new(q, p, big_q, big_p)
            }
            Region::Coherent {
                centre,
                half_width,
                cap_u,
            } => {
                let u = cap_u + (1.0 - cap_u) * rng.random::<f64>();
                let phi = 2.0 * PI * rng.random::<f64>();
                let (big_q, big_p) = sphere_to_disk(around_axis(disk_to_sphere(centre.Q, centre.P), u, phi));
                let q = centre.q + half_width * (2.0 * rng.random::<f64>() - 1.0);
                let p = centre.p + half_width * (2.0 * rng.random::<f64>() - 1.0);
                PhasePoint::new(q, p, big_q, big_p)
            }
            Region::Box { lo, hi } => {
                let (big_q, big_p) = uniform_disk(rng);
                let q = lo[0] + (hi[0] - lo[0]) * rng.random::<f64>();
                let p = lo[1] + (hi[1] - lo[1]) * rng.random::<f64>();
                PhasePoint::new(q, p, big_q, big_p)
            }
        }
    }
}

/// Gaussian `(q, p)` radius that leaves `tail` of a coherent state's mass
/// outside.
fn coherent_radius(j: f64, tail: f64) -> f64 {
    (2.0 * (1.0 / tail).ln() / j).sqrt()
}

/// `(q, p)` bounds of a pure component and its photon distribution when it
/// is a Fock-space state.
fn component_extent(s: &PureState, j: f64) -> Result<([f64; 2], [f64; 2], Option<Vec<f64>>)> {
    match s {
        PureState::Coherent(c) => {
            let r = coherent_radius(j, AUTO_TAIL);
            Ok(([c.point.q - r, c.point.p - r], [c.point.q + r, c.point.p + r], None))
        }
        PureState::Fock(v) => {
            let w = photon_distribution(v);
            let r = photon_radius(&w, j);
            Ok(([-r, -r], [r, r], Some(w)))
        }
        PureState::Eigen(e) => {
            let w = photon_distribution(&e.to_fock()?);
            let r = photon_radius(&w, j);
            Ok(([-r, -r], [r, r], Some(w)))
        }
    }
}

/// Husimi mass of a pure component outside `[lo, hi]` (bounded above via
/// the largest inscribed disk).
fn component_tail(s: &PureState, w: Option<&[f64]>, j: f64, lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let (cq, cp) = match s {
        PureState::Coherent(c) => (c.point.q, c.point.p),
        _ => (0.0, 0.0),
    };
    let r = (cq - lo[0]).min(hi[0] - cq).min(cp - lo[1]).min(hi[1] - cp).max(0.0);
    match w {
        Some(w) => photon_tail(w, j, r),
        None => (-0.5 * j * r * r).exp(),
    }
}

fn choose_region(state: &QuantumState, j: f64, half_width: Option<f64>) -> Result<Region> {
    let region = match state {
        QuantumState::Pure(PureState::Coherent(c)) if half_width.is_none() => {
            let r = coherent_radius(j, 0.5 * AUTO_TAIL);
            // Mass with (1 + cos Θ)/2 < s is s^{2j+1}.
            let s = (0.5 * AUTO_TAIL).powf(1.0 / (2.0 * j + 1.0));
            return Ok(Region::Coherent {
                centre: c.point,
                half_width: r,
                cap_u: 2.0 * s - 1.0,
            });
        }
        QuantumState::Pure(s) => vec![(1.0, s.clone())],
        QuantumState::Ensemble(c) => c.clone(),
        QuantumState::TimeAveraged(t) => {
            let basis = t.initial.spectrum.fock_basis()?;
            let e = t.initial.spectrum.eigenvectors.select(ndarray::Axis(1), &t.initial.indices);
            let w = averaged_photon_distribution(&basis, &e, &t.density_matrix());
            let tr: f64 = w.iter().sum();
            let h = match half_width {
                Some(h) => h,
                None => photon_radius(&w, j),
            };
            let tail = photon_tail(&w, j, h);
            if tail > (1.0 - REQUIRED_CAPTURE) * tr {
                return Err(Error::BoxCapture { captured: 1.0 - tail / tr });
            }
            return Ok(Region::Fock { half_width: h });
        }
    };
    let mut extents = Vec::with_capacity(region.len());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (_, s) in &region {
        let (l, h, w) = component_extent(s, j)?;
        for a in 0..2 {
            lo[a] = lo[a].min(l[a]);
            hi[a] = hi[a].max(h[a]);
        }
        extents.push(w);
    }
    if let Some(h) = half_width {
        lo = [-h, -h];
        hi = [h, h];
    }
    let tail: f64 = region
        .iter()
        .zip(&extents)
        .map(|((wt, s), w)| wt * component_tail(s, w.as_deref(), j, lo, hi))
        .sum();
    if tail > 1.0 - REQUIRED_CAPTURE {
        return Err(Error::BoxCapture { captured: 1.0 - tail });
    }
    let centred = lo[0] == -hi[0] && lo[1] == -hi[1] && lo[0] == lo[1];
    Ok(if centred {
        Region::Fock { half_width: hi[0] }
    } else {
        Region::Box { lo, hi }
    })
}

/// `tr ρ` of the state as represented.
fn state_trace(state: &QuantumState) -> f64 {
    let pure = |s: &PureState| match s {
        PureState::Fock(v) => v.norm_sqr(),
        PureState::Coherent(_) | PureState::Eigen(_) => 1.0,
    };
    match state {
        QuantumState::Pure(s) => pure(s),
        QuantumState::Ensemble(c) => c.iter().map(|(w, s)| w * pure(s)).sum(),
        QuantumState::TimeAveraged(t) => t.initial.norm_sqr(),
    }
}

/// `C = ∫dx Q_ρ = (2π/j)(4π/(2j+1)) tr ρ`.
pub fn husimi_normalization(params: &ModelParams) -> f64 {
    let j = params.j();
    (2.0 * PI / j) * (4.0 * PI / (2.0 * j + 1.0))
}

/// Points evaluated per parallel Husimi call.
const EVAL_CHUNK: usize = 1 << 16;

/// `V_α(M, ρ) = C^{α/(α−1)} (∫dx Q_ρ^α)^{1/(1−α)}` over the unbounded phase
/// space, with the exponential-Wehrl form at α = 1.
///
/// The integral is plain Monte Carlo over a region that captures all but
/// `1e−7` of the Husimi mass; `box_half_width` replaces the automatic
/// `(q, p)` box by a centred one, which must still capture `1 − 1e−6`.
pub fn renyi_volume_phase_space(
    state: &QuantumState,
    alpha: f64,
    mc: &MonteCarloConfig,
    params: &ModelParams,
    box_half_width: Option<f64>,
) -> Result<OccupationResult> {
    check_alpha(alpha)?;
    if alpha < 0.5 {
        return Err(Error::AlphaBelowFloor { alpha, floor: 0.5 });
    }
    if mc.n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let j = params.j();
    let region = choose_region(state, j, box_half_width)?;
    let eval = HusimiEvaluator::new(state)?;
    let streams = StreamFactory::new(mc.seed, "renyi_volume_phase_space");
    let mut values = Vec::with_capacity(mc.n_samples);
    for start in (0..mc.n_samples).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(mc.n_samples);
        let pts: Vec<PhasePoint> = (start..end).map(|i| region.draw(&mut streams.stream(i as u64))).collect();
        values.extend(eval.eval_many(&pts)?.into_iter().map(|q| integrand(q, alpha)));
    }
    let sums = batched_sums::<1, _>(mc.n_samples, mc.n_batches, |i| [values[i]]);
    let est = BatchEstimate::from_sums(mc.n_samples, &sums);
    let vol = region.volume();
    let c = husimi_normalization(params) * state_trace(state);
    let i = est.mean[0] * vol;
    let (v, grad) = volume_from_integrals(c, i, alpha);
    Ok(OccupationResult {
        value: v,
        alpha,
        reference_volume: None,
        normalization: c,
        stderr: (grad[1] * est.stderr(0) * vol).abs(),
        config: OccupationConfig::MonteCarlo {
            n_samples: mc.n_samples,
            n_batches: mc.n_batches,
            seed: mc.seed,
            region: region.describe(),
        },
    })
}

/// `L_α(A)` from projection values on an atomic grid, with the projection
/// normalized to `normalization`.
pub fn occupation_atomic_from_values(grid: &ProjectionGrid, values: &[f64], alpha: f64, normalization: f64) -> Result<OccupationResult> {
    check_alpha(alpha)?;
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    let reference = 4.0 * PI;
    let value = if alpha == 0.0 {
        grid.weights.iter().zip(values).filter(|(_, &v)| v > 0.0).map(|(w, _)| w).sum::<f64>() / reference
    } else {
        let i: f64 = grid.weights.iter().zip(values).map(|(w, &v)| w * integrand(v, alpha)).sum();
        volume_from_integrals(normalization, i, alpha).0 / reference
    };
    Ok(OccupationResult {
        value,
        alpha,
        reference_volume: Some(reference),
        normalization,
        stderr: 0.0,
        config: OccupationConfig::Grid {
            resolution: grid.resolution,
            n_nodes: grid.len(),
        },
    })
}

/// `L_α(A, ρ)`: occupation of the Husimi projection on the Bloch disk.
///
/// Projections follow the `(j/2π)∬dq dp` convention, so the normalization is
/// `4π/(2j+1)` times the trace.
pub fn occupation_atomic(state: &QuantumState, alpha: f64, grid: &ProjectionGrid, params: &ModelParams) -> Result<OccupationResult> {
    let basis = projector_basis(state, params)?;
    let values = Projector::new(grid, &basis).project(state)?;
    let c = 4.0 * PI / (2.0 * params.j() + 1.0) * state_trace(state);
    occupation_atomic_from_values(grid, &values, alpha, c)
}

fn projector_basis(state: &QuantumState, params: &ModelParams) -> Result<FockBasisSpec> {
    let of_pure = |s: &PureState| -> Result<Option<FockBasisSpec>> {
        Ok(match s {
            PureState::Fock(v) => Some(v.basis),
            PureState::Eigen(e) => Some(crate::husimi::projection_basis(&e.spectrum)),
            PureState::Coherent(_) => None,
        })
    };
    let found = match state {
        QuantumState::Pure(s) => of_pure(s)?,
        QuantumState::Ensemble(c) => c.iter().map(|(_, s)| of_pure(s)).collect::<Result<Vec<_>>>()?.into_iter().flatten().next(),
        QuantumState::TimeAveraged(t) => Some(t.initial.spectrum.fock_basis()?),
    };
    Ok(found.unwrap_or(FockBasisSpec::new(params, 0)))
}

/// `L_α(ε)` from Husimi values at the points of a shell sample.
pub fn occupation_shell_from_values(values: &[f64], alpha: f64, shell: &ShellSample, nu: f64, n_batches: usize) -> Result<OccupationResult> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Err(Error::InvalidArgument("shell occupations need alpha > 0".into()));
    }
    if values.len() != shell.len() {
        return Err(Error::DimensionMismatch {
            expected: shell.len(),
            found: values.len(),
        });
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!("nu must be positive, got {nu}")));
    }
    let pairs: Vec<[f64; 2]> = values.iter().map(|&q| [q.max(0.0), integrand(q, alpha)]).collect();
    let est = shell.integrate(&pairs, n_batches);
    let (c, c_err) = (est.mean[0], est.stderr(0));
    if !(c > 3.0 * c_err) || c <= 0.0 {
        return Err(Error::NoShellSupport { value: c, stderr: c_err });
    }
    let reference = 4.0 * PI * PI * nu;
    let (v, grad) = volume_from_integrals(c, est.mean[1], alpha);
    Ok(OccupationResult {
        value: v / reference,
        alpha,
        reference_volume: Some(reference),
        normalization: c,
        stderr: est.delta_stderr(grad) / reference,
        config: OccupationConfig::Shell {
            epsilon: shell.epsilon,
            n_draws: shell.n_draws,
            n_points: shell.len(),
            n_batches,
            seed: shell.seed,
            nu,
        },
    })
}

/// `L_α(ε, ρ)`: occupation of the Husimi function restricted to the
/// classical energy shell sampled by `shell`.
pub fn occupation_shell(state: &QuantumState, alpha: f64, shell: &ShellSample, nu: f64, n_batches: usize) -> Result<OccupationResult> {
    let values = HusimiEvaluator::new(state)?.eval_many(&shell.points)?;
    occupation_shell_from_values(&values, alpha, shell, nu, n_batches)
}

/// `C_ε` at one energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub epsilon: f64,
    pub c: f64,
    pub stderr: f64,
}

/// Energy profile `C_ε = ∫ds Q_ρ` over precomputed shells.
pub fn energy_profile(state: &QuantumState, shells: &[ShellSample], n_batches: usize) -> Result<Vec<ProfilePoint>> {
    let eval = HusimiEvaluator::new(state)?;
    shells
        .iter()
        .map(|s| {
            let values: Vec<[f64; 1]> = eval.eval_many(&s.points)?.into_iter().map(|q| [q.max(0.0)]).collect();
            let est = s.integrate(&values, n_batches);
            Ok(ProfilePoint {
                epsilon: s.epsilon,
                c: est.mean[0],
                stderr: est.stderr(0),
            })
        })
        .collect()
}

/// Smallest α, in units of ħ², for which the coherent-state bound is used.
pub const BOUND_FLOOR_FACTOR: f64 = 10.0;

/// Exact Rényi volume of a coherent state, the lower bound for any state:
/// `8π²ħ²(ħ+2)^{α/(1−α)}(α(2α+ħ))^{1/(α−1)}`, and its α → 1 limit
/// `8π²ħ² e^{(ħ+4)/(ħ+2)}/(ħ+2)`.
pub fn coherent_lower_bound(alpha: f64, hbar_eff: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(hbar_eff > 0.0) {
        return Err(Error::InvalidArgument(format!("hbar_eff must be positive, got {hbar_eff}")));
    }
    let floor = BOUND_FLOOR_FACTOR * hbar_eff * hbar_eff;
    if alpha < floor {
        return Err(Error::AlphaBelowFloor { alpha, floor });
    }
    let h = hbar_eff;
    Ok(if alpha == 1.0 {
        8.0 * PI * PI * h * h * ((h + 4.0) / (h + 2.0)).exp() / (h + 2.0)
    } else {
        // Log space: both powers overflow near α = 1.
        let ln_v = (8.0 * PI * PI * h * h).ln() + alpha / (1.0 - alpha) * (h + 2.0).ln()
            + (alpha * (2.0 * alpha + h)).ln() / (alpha - 1.0);
        ln_v.exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::sample_shell;
    use crate::husimi::{build_projection_grid, Plane};
    use crate::states::coherent_fock_coefficients;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn random_distribution(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    #[test]
    fn uniform_gives_count() {
        for n in [1, 7, 100] {
            let p = vec![1.0 / n as f64; n];
            for a in [0.0, 0.5, 1.0, 2.0, 3.0] {
                let v = renyi_volume_discrete(&p, a).unwrap();
                assert!((v - n as f64).abs() < 1e-10 * n as f64, "n={n} a={a} v={v}");
            }
        }
    }

    #[test]
    fn participation_ratio_of_two_levels() {
        let v = renyi_volume_discrete(&[0.5, 0.5, 0.0], 2.0).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        assert_eq!(renyi_volume_discrete(&[0.5, 0.5, 0.0], 0.0).unwrap(), 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(renyi_volume_discrete(&[0.5, 0.4], 2.0), Err(Error::Unnormalized(_))));
        assert!(matches!(renyi_volume_discrete(&[1.5, -0.5], 2.0), Err(Error::InvalidProbability(_))));
        assert!(renyi_volume_discrete(&[1.0], -1.0).is_err());
    }

    #[test]
    fn shannon_is_continuous_limit() {
        for seed in 0..20 {
            let p = random_distribution(100, seed);
            let v1 = renyi_volume_discrete(&p, 1.0).unwrap();
            let v = renyi_volume_discrete(&p, 1.0001).unwrap();
            assert!((v - v1).abs() / v1 < 1e-3);
        }
    }

    #[test]
    fn identical_disjoint_mixture_doubles() {
        let p = random_distribution(30, 5);
        let mut mix: Vec<f64> = p.iter().map(|x| x / 2.0).collect();
        mix.extend(p.iter().map(|x| x / 2.0));
        let v = renyi_volume_discrete(&p, 2.0).unwrap();
        let vm = renyi_volume_discrete(&mix, 2.0).unwrap();
        assert!((vm - 2.0 * v).abs() < 1e-10 * v);
    }

    proptest! {
        #[test]
        fn scaling_is_homogeneous(seed in 0u64..10_000, k in 0.01f64..100.0, ai in 0usize..4) {
            let alpha = DEFAULT_ALPHAS[ai];
            let p = random_distribution(50, seed);
            let ones = vec![1.0; p.len()];
            let v = renyi_volume_weighted(&p, &ones, alpha).unwrap();
            let scaled: Vec<f64> = p.iter().map(|x| x / k).collect();
            let vk = renyi_volume_weighted(&scaled, &vec![k; p.len()], alpha).unwrap();
            prop_assert!((vk - k * v).abs() <= 1e-12 * k * v);
        }

        #[test]
        fn volume_never_exceeds_support(seed in 0u64..10_000, ai in 0usize..4) {
            let p = random_distribution(40, seed);
            let v = renyi_volume_discrete(&p, DEFAULT_ALPHAS[ai]).unwrap();
            prop_assert!(v > 0.0 && v <= 40.0 * (1.0 + 1e-12));
        }

        #[test]
        fn non_uniform_is_strictly_below_maximum(seed in 0u64..10_000, ai in 0usize..2) {
            let alpha = [1.0, 2.0][ai];
            let p = random_distribution(20, seed);
            prop_assert!(renyi_volume_discrete(&p, alpha).unwrap() < 20.0 - 1e-9);
        }

        #[test]
        fn volume_decreases_with_order(seed in 0u64..10_000) {
            let p = random_distribution(25, seed);
            let v: Vec<f64> = DEFAULT_ALPHAS.iter().map(|&a| renyi_volume_discrete(&p, a).unwrap()).collect();
            prop_assert!(v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }
    }

    /// Direct integration of the origin coherent state: a Gaussian in
    /// `(q, p)` times `((1+u)/2)^{2j}` on the sphere.
    fn coherent_volume_oracle(alpha: f64, j: f64) -> f64 {
        let c = (2.0 * PI / j) * (4.0 * PI / (2.0 * j + 1.0));
        if alpha == 1.0 {
            // E[j r²/2] = 1 and E[ln s] = −1/(2j+1) under the normalized factors.
            let entropy = 1.0 + 2.0 * j / (2.0 * j + 1.0);
            return c * entropy.exp();
        }
        let i = (2.0 * PI / (alpha * j)) * (4.0 * PI / (2.0 * alpha * j + 1.0));
        c.powf(alpha / (alpha - 1.0)) * i.powf(1.0 / (1.0 - alpha))
    }

    #[test]
    fn bound_matches_direct_integration() {
        for j in [5.0, 10.0, 30.0] {
            for a in [0.5, 1.0, 2.0, 3.0] {
                let b = coherent_lower_bound(a, 1.0 / j).unwrap();
                let o = coherent_volume_oracle(a, j);
                assert!((b - o).abs() < 1e-12 * o, "j={j} a={a} {b} vs {o}");
            }
        }
        let h = 1.0 / 30.0;
        assert!((coherent_lower_bound(2.0, h).unwrap() - 0.171188).abs() / 0.171188 < 2e-4);
        let v1 = coherent_lower_bound(1.0, h).unwrap();
        for a in [1.0 - 1e-4, 1.0 + 1e-4] {
            assert!((coherent_lower_bound(a, h).unwrap() - v1).abs() < 1e-4);
        }
        // Leading order (2πħ)²α^{2/(α−1)}, with e² at α = 1.
        let lead = (2.0 * PI * h).powi(2);
        assert!((coherent_lower_bound(2.0, h).unwrap() - 4.0 * lead).abs() / (4.0 * lead) < 0.03);
        assert!((v1 - lead * 1f64.exp().powi(2)).abs() / v1 < 0.05);
        assert!(matches!(coherent_lower_bound(0.001, 0.2), Err(Error::AlphaBelowFloor { .. })));
    }

    #[test]
    fn equal_area_map_roundtrips_and_matches_overlap() {
        let pts = [(0.3, -0.4), (1.5, 1.2), (-1.9, 0.1), (0.0, 0.0)];
        for &(q, p) in &pts {
            let (a, b) = sphere_to_disk(disk_to_sphere(q, p));
            assert!((a - q).abs() < 1e-12 && (b - p).abs() < 1e-12);
        }
        let j = 7.0;
        for &(q1, p1) in &pts {
            for &(q2, p2) in &pts {
                let (n1, n2) = (disk_to_sphere(q1, p1), disk_to_sphere(q2, p2));
                let dot: f64 = (0..3).map(|i| n1[i] * n2[i]).sum();
                let expect = ((1.0 + dot) / 2.0).powf(2.0 * j);
                let got = crate::states::bloch_overlap_sq(q1, p1, q2, p2, j);
                assert!((got - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cap_draws_stay_in_cap() {
        let c = disk_to_sphere(1.2, -0.7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let u = rng.random::<f64>() * 2.0 - 1.0;
            let n = around_axis(c, u, rng.random::<f64>() * 2.0 * PI);
            let dot: f64 = (0..3).map(|i| n[i] * c[i]).sum();
            assert!((dot - u).abs() < 1e-12);
        }
    }

    #[test]
    fn photon_tail_of_vacuum_is_gaussian() {
        let t = photon_tail(&[1.0], 4.0, 1.5);
        assert!((t - (-0.5 * 4.0 * 2.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn coherent_volume_by_monte_carlo() {
        let p = ModelParams::resonant(10.0).unwrap();
        let x = PhasePoint::new(0.4, -0.2, 0.9, 0.3);
        let st = QuantumState::coherent(x, &p).unwrap();
        let mc = MonteCarloConfig::new(200_000, 11);
        for a in [1.0, 2.0] {
            let r = renyi_volume_phase_space(&st, a, &mc, &p, None).unwrap();
            let exact = coherent_lower_bound(a, 0.1).unwrap();
            assert!((r.value - exact).abs() < 4.0 * r.stderr, "a={a} {} ± {} vs {exact}", r.value, r.stderr);
        }
    }

    #[test]
    fn fock_vacuum_volume_matches_coherent_form() {
        let p = ModelParams::resonant(3.0).unwrap();
        let basis = FockBasisSpec::new(&p, 25);
        let v = coherent_fock_coefficients(&PhasePoint::default(), &basis).unwrap();
        let st = QuantumState::Pure(PureState::Fock(v));
        let r = renyi_volume_phase_space(&st, 2.0, &MonteCarloConfig::new(100_000, 1), &p, None).unwrap();
        let exact = coherent_lower_bound(2.0, 1.0 / 3.0).unwrap();
        assert!((r.value - exact).abs() < 4.0 * r.stderr, "{} ± {} vs {exact}", r.value, r.stderr);
    }

    #[test]
    fn small_box_is_rejected() {
        let p = ModelParams::resonant(3.0).unwrap();
        let st = QuantumState::coherent(PhasePoint::default(), &p).unwrap();
        let mc = MonteCarloConfig::new(100, 0);
        assert!(matches!(
            renyi_volume_phase_space(&st, 2.0, &mc, &p, Some(0.5)),
            Err(Error::BoxCapture { .. })
        ));
        assert!(renyi_volume_phase_space(&st, 0.2, &mc, &p, None).is_err());
    }

    #[test]
    fn uniform_projection_has_full_occupation() {
        let j = 5.0;
        let grid = build_projection_grid(Plane::Atomic, 8, j, None).unwrap();
        let c = 4.0 * PI / (2.0 * j + 1.0);
        let vals = vec![c / (4.0 * PI); grid.len()];
        for a in [1.0, 2.0] {
            let r = occupation_atomic_from_values(&grid, &vals, a, c).unwrap();
            assert!((r.value - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn coherent_atomic_occupation_ignores_bosonic_centroid() {
        let p = ModelParams::resonant(4.0).unwrap();
        let grid = build_projection_grid(Plane::Atomic, 8, 4.0, None).unwrap();
        let a = QuantumState::coherent(PhasePoint::new(0.0, 0.0, 0.5, 1.0), &p).unwrap();
        let b = QuantumState::coherent(PhasePoint::new(2.0, -1.0, 0.5, 1.0), &p).unwrap();
        let la = occupation_atomic(&a, 2.0, &grid, &p).unwrap().value;
        let lb = occupation_atomic(&b, 2.0, &grid, &p).unwrap().value;
        assert!((la - lb).abs() < 1e-12);
        // ∫ Q̃² = 4π/(4j+1) for a spin coherent state, so L₂ = (4j+1)/(2j+1)².
        let expect = 17.0 / 81.0;
        assert!((la - expect).abs() < 1e-10, "{la}");
    }

    #[test]
    fn uniform_shell_values_have_full_occupation() {
        let p = ModelParams::resonant(5.0).unwrap();
        let shell = sample_shell(-0.5, 40_000, 3, &p).unwrap();
        let (vol, _) = shell.volume(20);
        let nu = vol / (4.0 * PI * PI);
        let vals = vec![0.37; shell.len()];
        for a in [1.0, 2.0] {
            let r = occupation_shell_from_values(&vals, a, &shell, nu, 20).unwrap();
            assert!((r.value - 1.0).abs() <= 3.0 * r.stderr + 1e-12, "{} ± {}", r.value, r.stderr);
        }
    }

    #[test]
    fn shell_occupation_bounded_and_profile_nonnegative() {
        let p = ModelParams::resonant(5.0).unwrap();
        let shell = sample_shell(-0.5, 40_000, 4, &p).unwrap();
        let (vol, _) = shell.volume(20);
        let nu = vol / (4.0 * PI * PI);
        let x = shell.points[10];
        let st = QuantumState::coherent(x, &p).unwrap();
        for a in DEFAULT_ALPHAS {
            let r = occupation_shell(&st, a, &shell, nu, 20).unwrap();
            assert!(r.value > 0.0 && r.value <= 1.0 + 3.0 * r.stderr);
        }
        let prof = energy_profile(&st, std::slice::from_ref(&shell), 20).unwrap();
        assert!(prof[0].c > 0.0);
    }

    #[test]
    fn far_state_has_no_shell_support() {
        let p = ModelParams::resonant(10.0).unwrap();
        let shell = sample_shell(-1.5, 5_000, 4, &p).unwrap();
        let st = QuantumState::coherent(PhasePoint::new(30.0, 0.0, 0.0, 0.0), &p).unwrap();
        assert!(matches!(occupation_shell(&st, 2.0, &shell, 1.0, 20), Err(Error::NoShellSupport { .. })));
    }
}
