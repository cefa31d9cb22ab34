//! Coherent states, eigenbasis expansions, exact time evolution and time
//! averaging, and the coherent-state mixtures used in the experiments.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{h_cl, nearest_root, PhasePoint};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::model::{build_fock_hamiltonian, ln_factorials, FockBasisSpec, ModelParams, Spectrum};

/// Tolerance on the Glauber weight lost beyond the truncation.
pub const TAIL_TOL: f64 = 1e-10;

fn ln_binomial(lnf: &[f64], n: usize, k: usize) -> f64 {
    lnf[n] - lnf[k] - lnf[n - k]
}

/// Probability that a Poisson variable of mean `mean` exceeds `n_max`.
fn poisson_tail(mean: f64, n_max: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let lm = mean.ln();
    let mut ln_fact = ln_factorials(n_max + 1)[n_max + 1];
    let mut tail = 0.0;
    let mut n = n_max + 1;
    loop {
        let term = (-mean + n as f64 * lm - ln_fact).exp();
        tail += term;
        if (n as f64 > mean && term < 1e-18 * tail.max(1e-300)) || n > n_max + 100_000 {
            break;
        }
        n += 1;
        ln_fact += (n as f64).ln();
    }
    tail
}

/// Glauber amplitudes `<n|α>` for `α = √(j/2)(q + ip)` and `n ≤ n_max`,
/// together with the probability weight beyond `n_max`.
pub fn glauber_amplitudes(q: f64, p: f64, j: f64, n_max: usize) -> (Vec<Complex64>, f64) {
    let alpha = Complex64::new(q, p) * (j / 2.0).sqrt();
    let r2 = alpha.norm_sqr();
    let lnf = ln_factorials(n_max);
    let mut out = Vec::with_capacity(n_max + 1);
    if r2 == 0.0 {
        out.push(Complex64::new(1.0, 0.0));
        out.resize(n_max + 1, Complex64::new(0.0, 0.0));
        return (out, 0.0);
    }
    let (lr, arg) = (alpha.norm().ln(), alpha.arg());
    for n in 0..=n_max {
        let mag = (-0.5 * r2 + n as f64 * lr - 0.5 * lnf[n]).exp();
        out.push(Complex64::from_polar(mag, n as f64 * arg));
    }
    (out, poisson_tail(r2, n_max))
}

/// Bloch amplitudes `<j, m_z|Q, P>` indexed by `k = m_z + j`.
///
/// Written as `√binom(2j, k) z^k c^{2j−k}` with `z = (Q + iP)/2` and
/// `c = √(1 − Z²/4)`, which stays finite on the rim `Z² = 4`.
#[allow(non_snake_case)]
pub fn bloch_amplitudes(Q: f64, P: f64, two_j: u32) -> Vec<Complex64> {
    let n = two_j as usize;
    let lnf = ln_factorials(n);
    let z = Complex64::new(Q, P) / 2.0;
    let c2 = (1.0 - z.norm_sqr()).max(0.0);
    let (lz, arg) = (z.norm().ln(), z.arg());
    let lc = 0.5 * c2.ln();
    (0..=n)
        .map(|k| {
            let mut l = 0.5 * ln_binomial(&lnf, n, k);
            if k > 0 {
                l += k as f64 * lz;
            }
            if k < n {
                l += (n - k) as f64 * lc;
            }
            Complex64::from_polar(l.exp(), k as f64 * arg)
        })
        .collect()
}

/// |<x|y>|² in closed form: Glauber Gaussian times `|c c' + z̄ z'|^{4j}`.
pub fn coherent_overlap_sq(x: &PhasePoint, y: &PhasePoint, j: f64) -> f64 {
    let dq = x.q - y.q;
    let dp = x.p - y.p;
    let bloch = bloch_overlap_sq(x.Q, x.P, y.Q, y.P, j);
    (-0.5 * j * (dq * dq + dp * dp)).exp() * bloch
}

/// |<Q,P|Q',P'>|² for Bloch coherent states of spin `j`.
#[allow(non_snake_case)]
pub fn bloch_overlap_sq(Q1: f64, P1: f64, Q2: f64, P2: f64, j: f64) -> f64 {
    let z1 = Complex64::new(Q1, P1) / 2.0;
    let z2 = Complex64::new(Q2, P2) / 2.0;
    let c1 = (1.0 - z1.norm_sqr()).max(0.0).sqrt();
    let c2 = (1.0 - z2.norm_sqr()).max(0.0).sqrt();
    let s = (z1.conj() * z2 + c1 * c2).norm_sqr().min(1.0);
    if s == 0.0 {
        return 0.0;
    }
    (2.0 * j * s.ln()).exp()
}

/// A normalized state vector in the Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureVector {
    pub basis: FockBasisSpec,
    pub coeffs: Vec<Complex64>,
}

impl PureVector {
    pub fn new(basis: FockBasisSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: coeffs.len(),
            });
        }
        let norm = norm_sqr(&coeffs);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Unnormalized(norm));
        }
        Ok(Self { basis, coeffs })
    }

    /// Rescales an arbitrary non-zero vector to unit norm.
    pub fn normalized(basis: FockBasisSpec, mut coeffs: Vec<Complex64>) -> Result<Self> {
        let norm = norm_sqr(&coeffs).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Unnormalized(0.0));
        }
        for c in coeffs.iter_mut() {
            *c /= norm;
        }
        Self::new(basis, coeffs)
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.coeffs)
    }

    /// Weight on the top `guard_fraction` of bosonic levels.
    pub fn guard_weight(&self, guard_fraction: f64) -> f64 {
        let cut = self.basis.n_max as f64 * (1.0 - guard_fraction);
        let na = self.basis.atomic_dim();
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| (i / na) as f64 > cut)
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    pub fn inner(&self, other: &PureVector) -> Complex64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum()
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// Fock coefficients `<n, m_z|x>` of the coherent state at `x`, renormalized
/// after truncation.
pub fn coherent_fock_coefficients(x: &PhasePoint, basis: &FockBasisSpec) -> Result<PureVector> {
    x.check_bloch()?;
    let j = basis.j();
    let (glauber, tail) = glauber_amplitudes(x.q, x.p, j, basis.n_max);
    if tail > TAIL_TOL {
        return Err(Error::TruncationTail { tail, tol: TAIL_TOL });
    }
    let bloch = bloch_amplitudes(x.Q, x.P, basis.two_j);
    let mut coeffs = Vec::with_capacity(basis.dim());
    for g in &glauber {
        for b in &bloch {
            coeffs.push(g * b);
        }
    }
    PureVector::normalized(*basis, coeffs)
}

/// Closed-form coherent state `|x>` of spin `j` without truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentState {
    pub point: PhasePoint,
    pub two_j: u32,
}

impl CoherentState {
    pub fn new(point: PhasePoint, params: &ModelParams) -> Result<Self> {
        point.check_bloch()?;
        Ok(Self {
            point,
            two_j: params.two_j(),
        })
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn to_fock(&self, basis: &FockBasisSpec) -> Result<PureVector> {
        if basis.two_j != self.two_j {
            return Err(Error::BasisMismatch(format!(
                "coherent state has 2j = {}, basis has 2j = {}",
                self.two_j, basis.two_j
            )));
        }
        coherent_fock_coefficients(&self.point, basis)
    }
}

/// Coefficients over a subset of eigenstates of a Fock-basis spectrum.
#[derive(Debug, Clone)]
pub struct EigenVector {
    pub spectrum: Arc<Spectrum>,
    pub indices: Vec<usize>,
    pub coeffs: Vec<Complex64>,
}

impl EigenVector {
    pub fn eigenstate(spectrum: Arc<Spectrum>, k: usize) -> Self {
        Self {
            spectrum,
            indices: vec![k],
            coeffs: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.coeffs)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.indices.iter().map(|&k| self.spectrum.eigenvalues[k]).collect()
    }

    /// `c_k e^{−i E_k t}`.
    pub fn evolved(&self, t: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&self.indices)
            .map(|(c, &k)| c * Complex64::from_polar(1.0, -self.spectrum.eigenvalues[k] * t))
            .collect();
        Self {
            spectrum: self.spectrum.clone(),
            indices: self.indices.clone(),
            coeffs,
        }
    }

    /// Keeps the largest components until at most `discard` of the weight is
    /// dropped, then renormalizes. Indices stay ascending.
    pub fn significant(&self, discard: f64) -> Self {
        let mut order: Vec<usize> = (0..self.coeffs.len()).collect();
        order.sort_by(|&a, &b| self.coeffs[a].norm_sqr().total_cmp(&self.coeffs[b].norm_sqr()));
        let total = self.norm_sqr();
        let mut dropped = 0.0;
        let mut keep = vec![true; order.len()];
        for &i in &order {
            let w = self.coeffs[i].norm_sqr();
            if dropped + w > discard * total {
                break;
            }
            dropped += w;
            keep[i] = false;
        }
        let scale = 1.0 / (total - dropped).sqrt();
        let (indices, coeffs) = self
            .indices
            .iter()
            .zip(&self.coeffs)
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|((&i, &c), _)| (i, c * scale))
            .unzip();
        Self {
            spectrum: self.spectrum.clone(),
            indices,
            coeffs,
        }
    }

    /// `Σ_k c_k |E_k>` in the basis of the spectrum.
    pub fn basis_coefficients(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.spectrum.dim()];
        for (&k, &c) in self.indices.iter().zip(&self.coeffs) {
            for (o, &e) in out.iter_mut().zip(self.spectrum.eigenvector(k).iter()) {
                *o += c * e;
            }
        }
        out
    }

    pub fn to_fock(&self) -> Result<PureVector> {
        let basis = self.spectrum.fock_basis()?;
        PureVector::normalized(basis, self.basis_coefficients())
    }
}

/// ρ̄(T) = (1/T)∫₀ᵀ ψ(t)ψ(t)† dt for ψ(0) given in the eigenbasis.
#[derive(Debug, Clone)]
pub struct TimeAveraged {
    pub initial: EigenVector,
    pub t_avg: f64,
}

impl TimeAveraged {
    /// `M_kl = c_k c_l* W_kl(T)` over the retained eigenstates.
    pub fn density_matrix(&self) -> Array2<Complex64> {
        let e = self.initial.energies();
        let c = &self.initial.coeffs;
        let n = c.len();
        Array2::from_shape_fn((n, n), |(k, l)| c[k] * c[l].conj() * averaging_kernel(e[k] - e[l], self.t_avg))
    }
}

/// `W(ΔE, T) = (e^{−iΔE T} − 1)/(−iΔE T)`, evaluated as
/// `e^{−ix/2} sin(x/2)/(x/2)` to avoid cancellation at small `x = ΔE T`.
pub fn averaging_kernel(delta_e: f64, t: f64) -> Complex64 {
    let h = 0.5 * delta_e * t;
    let sinc = if h == 0.0 { 1.0 } else { h.sin() / h };
    Complex64::from_polar(sinc, -h)
}

/// Builds the time-averaged state of `c` over `[0, T]`.
pub fn time_average_kernel(c: &EigenVector, t_avg: f64) -> Result<TimeAveraged> {
    if !(t_avg >= 0.0) {
        return Err(Error::InvalidArgument(format!("averaging time must be non-negative, got {t_avg}")));
    }
    Ok(TimeAveraged {
        initial: c.clone(),
        t_avg,
    })
}

/// A state that has a single amplitude `<x|ψ>`.
#[derive(Debug, Clone)]
pub enum PureState {
    Fock(PureVector),
    Coherent(CoherentState),
    Eigen(EigenVector),
}

#[derive(Debug, Clone)]
pub enum QuantumState {
    Pure(PureState),
    /// Weighted mixture; weights are positive and sum to one.
    Ensemble(Vec<(f64, PureState)>),
    TimeAveraged(TimeAveraged),
}

impl QuantumState {
    pub fn ensemble(components: Vec<(f64, PureState)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("empty ensemble".into()));
        }
        let mut total = 0.0;
        for (w, _) in &components {
            if !(*w > 0.0) {
                return Err(Error::InvalidProbability(*w));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Unnormalized(total));
        }
        Ok(QuantumState::Ensemble(components))
    }

    /// Equal-weight mixture of coherent states.
    pub fn coherent_mixture(points: &[PhasePoint], params: &ModelParams) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        let comps = points
            .iter()
            .map(|x| Ok((w, PureState::Coherent(CoherentState::new(*x, params)?))))
            .collect::<Result<Vec<_>>>()?;
        Self::ensemble(comps)
    }

    pub fn coherent(x: PhasePoint, params: &ModelParams) -> Result<Self> {
        Ok(QuantumState::Pure(PureState::Coherent(CoherentState::new(x, params)?)))
    }
}

/// Fock basis plus sparse Hamiltonian, for moments of Fock-space states.
#[derive(Debug, Clone)]
pub struct FockContext {
    pub params: ModelParams,
    pub basis: FockBasisSpec,
    pub hamiltonian: CsrMatrix,
}

impl FockContext {
    pub fn new(params: &ModelParams, n_max: usize) -> Result<Self> {
        let basis = FockBasisSpec::new(params, n_max);
        let hamiltonian = build_fock_hamiltonian(params, &basis)?;
        Ok(Self {
            params: *params,
            basis,
            hamiltonian,
        })
    }
}

/// `(<H>, <H²>)` of a pure component.
fn raw_moments(state: &PureState, ctx: &FockContext) -> Result<(f64, f64)> {
    match state {
        PureState::Eigen(v) => {
            let norm = v.norm_sqr();
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for (c, e) in v.coeffs.iter().zip(v.energies()) {
                m1 += c.norm_sqr() * e;
                m2 += c.norm_sqr() * e * e;
            }
            Ok((m1 / norm, m2 / norm))
        }
        PureState::Coherent(c) => raw_moments(&PureState::Fock(c.to_fock(&ctx.basis)?), ctx),
        PureState::Fock(v) => {
            if v.basis != ctx.basis {
                return Err(Error::BasisMismatch("state and Hamiltonian use different truncations".into()));
            }
            let leak = v.guard_weight(0.1);
            if leak > 1e-8 {
                return Err(Error::TruncationTail { tail: leak, tol: 1e-8 });
            }
            let mut hv = vec![Complex64::new(0.0, 0.0); v.coeffs.len()];
            ctx.hamiltonian.matvec_complex(&v.coeffs, &mut hv);
            let m1: f64 = v.coeffs.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum();
            Ok((m1, norm_sqr(&hv)))
        }
    }
}

/// Mean scaled energy `<H>/j` and width `√(<H²> − <H>²)/j`.
pub fn energy_moments(state: &QuantumState, ctx: &FockContext) -> Result<(f64, f64)> {
    let (m1, m2) = match state {
        QuantumState::Pure(s) => raw_moments(s, ctx)?,
        QuantumState::Ensemble(comps) => {
            let mut acc = (0.0, 0.0);
            for (w, s) in comps {
                let (a, b) = raw_moments(s, ctx)?;
                acc.0 += w * a;
                acc.1 += w * b;
            }
            acc
        }
        // Time averaging leaves the energy distribution unchanged.
        QuantumState::TimeAveraged(t) => raw_moments(&PureState::Eigen(t.initial.clone()), ctx)?,
    };
    let j = ctx.params.j();
    Ok((m1 / j, (m2 - m1 * m1).max(0.0).sqrt() / j))
}

/// Expands `|x>` over the converged eigenstates of a Fock-basis spectrum.
/// Fails if they capture less than `1 − 1e−6` of the state.
pub fn eigen_expansion(x: &PhasePoint, spectrum: &Arc<Spectrum>) -> Result<EigenVector> {
    let basis = spectrum.fock_basis()?;
    let psi = coherent_fock_coefficients(x, &basis)?;
    let indices: Vec<usize> = (0..spectrum.len()).filter(|&k| spectrum.converged[k]).collect();
    let coeffs: Vec<Complex64> = indices
        .par_iter()
        .map(|&k| {
            spectrum
                .eigenvector(k)
                .iter()
                .zip(&psi.coeffs)
                .map(|(&e, c)| c * e)
                .sum::<Complex64>()
        })
        .collect();
    let captured = norm_sqr(&coeffs);
    let required = 1.0 - 1e-6;
    if captured < required {
        return Err(Error::InsufficientCoverage { captured, required });
    }
    Ok(EigenVector {
        spectrum: spectrum.clone(),
        indices,
        coeffs,
    })
}

/// `|ψ(t)> = Σ_k <E_k|x> e^{−iE_k t} |E_k>` over converged eigenstates.
pub fn evolve(x: &PhasePoint, spectrum: &Arc<Spectrum>, t: f64) -> Result<EigenVector> {
    Ok(eigen_expansion(x, spectrum)?.evolved(t))
}

/// Polar angles `(θ, φ)` of a Bloch point with `cos θ = 1 − Z²/2` and
/// `φ = atan2(−P, Q)`.
#[allow(non_snake_case)]
pub fn bloch_angles(Q: f64, P: f64) -> (f64, f64) {
    let z2 = Q * Q + P * P;
    let cos_t = (1.0 - z2 / 2.0).clamp(-1.0, 1.0);
    // sin θ = Z √(1 − Z²/4) avoids cancellation near the pole.
    let sin_t = z2.sqrt() * (1.0 - z2 / 4.0).max(0.0).sqrt();
    (sin_t.atan2(cos_t), (-P).atan2(Q))
}

/// D = √(Δq² + Δp² + Θ²) with Θ the great-circle angle between the Bloch
/// points.
pub fn phase_space_distance(x: &PhasePoint, y: &PhasePoint) -> f64 {
    let unit = |pt: &PhasePoint| {
        let (t, f) = bloch_angles(pt.Q, pt.P);
        [t.sin() * f.cos(), t.sin() * f.sin(), t.cos()]
    };
    let (u, v) = (unit(x), unit(y));
    let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let sin_big = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let cos_big = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let theta = sin_big.atan2(cos_big);
    let dq = x.q - y.q;
    let dp = x.p - y.p;
    (dq * dq + dp * dp + theta * theta).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationMode {
    /// Move `Q_y` at fixed `P_y`, `p_y`.
    Atomic,
    /// Move `p_y` at fixed `Q_y`, `P_y`.
    Bosonic,
}

/// One member `ρ_M(D) = (|x><x| + |y><y|)/2` of a separation family.
#[derive(Debug, Clone)]
pub struct SeparationMember {
    pub target_d: f64,
    pub achieved_d: f64,
    pub y: PhasePoint,
    pub epsilon_y: f64,
    /// Energy width of the pair mixture, when a Fock context was supplied.
    pub sigma: Option<f64>,
    pub state: QuantumState,
}

/// Point on the shell obtained by moving the free coordinate of `x` to `s`.
fn displaced(x: &PhasePoint, mode: SeparationMode, s: f64, q_ref: f64, eps: f64, params: &ModelParams) -> Result<PhasePoint> {
    let (p, big_q, big_p) = match mode {
        SeparationMode::Atomic => (x.p, s, x.P),
        SeparationMode::Bosonic => (s, x.Q, x.P),
    };
    if big_q * big_q + big_p * big_p > 4.0 {
        return Err(Error::ShellEdge(format!("Q = {big_q} leaves the Bloch disk")));
    }
    let q = nearest_root(q_ref, p, big_q, big_p, eps, params)?;
    Ok(PhasePoint::new(q, p, big_q, big_p))
}

/// Pair mixtures at the requested separations `D`.
///
/// `direction` (±1) chooses which way the free coordinate moves. The
/// partner `y` is tracked continuously from `x`: the free coordinate is
/// stepped until `D` passes the target and then bisected, always taking the
/// `q`-root nearest the previous one.
pub fn separation_family(
    x_fixed: &PhasePoint,
    mode: SeparationMode,
    epsilon_m: f64,
    d_grid: &[f64],
    direction: f64,
    params: &ModelParams,
    ctx: Option<&FockContext>,
) -> Result<Vec<SeparationMember>> {
    let e0 = h_cl(x_fixed, params)?;
    if (e0 - epsilon_m).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "reference point has energy {e0}, expected {epsilon_m}"
        )));
    }
    let start = match mode {
        SeparationMode::Atomic => x_fixed.Q,
        SeparationMode::Bosonic => x_fixed.p,
    };
    let dir = if direction < 0.0 { -1.0 } else { 1.0 };
    let step = 2e-3;
    let mut members = Vec::with_capacity(d_grid.len());
    // Scan state: last accepted free coordinate and its q.
    let mut s_lo = start;
    let mut y_lo = *x_fixed;
    for &target in d_grid {
        let y = if target <= 0.0 {
            *x_fixed
        } else {
            loop {
                if phase_space_distance(x_fixed, &y_lo) >= target {
                    break y_lo;
                }
                let s_hi = s_lo + dir * step;
                let y_hi = displaced(x_fixed, mode, s_hi, y_lo.q, epsilon_m, params)?;
                if phase_space_distance(x_fixed, &y_hi) >= target {
                    // Bisect between the bracketing points.
                    let (mut a, mut b) = (s_lo, s_hi);
                    let mut ya = y_lo;
                    let mut yb = y_hi;
                    for _ in 0..60 {
                        let mid = 0.5 * (a + b);
                        let ym = displaced(x_fixed, mode, mid, ya.q, epsilon_m, params)?;
                        if phase_space_distance(x_fixed, &ym) >= target {
                            b = mid;
                            yb = ym;
                        } else {
                            a = mid;
                            ya = ym;
                        }
                    }
                    s_lo = a;
                    y_lo = ya;
                    break yb;
                }
                s_lo = s_hi;
                y_lo = y_hi;
            }
        };
        let state = QuantumState::coherent_mixture(&[*x_fixed, y], params)?;
        let sigma = match ctx {
            Some(c) => Some(energy_moments(&state, c)?.1),
            None => None,
        };
        members.push(SeparationMember {
            target_d: target,
            achieved_d: phase_space_distance(x_fixed, &y),
            y,
            epsilon_y: h_cl(&y, params)?,
            sigma,
            state,
        });
    }
    Ok(members)
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Centroids of the saturation mixture: a golden-angle lattice of `n`
/// points on a disk of radius `2√(min(n, n_full)/n_full)`, rotated by a
/// seed-derived angle, with `p = 0` and `q` on the upper root of
/// `h_cl = ε_M`. Points with no root are pulled inwards to the nearest
/// feasible radius.
pub fn saturation_centroids(n: usize, epsilon_m: f64, n_full: usize, seed: u64, params: &ModelParams) -> Result<Vec<PhasePoint>> {
    if n == 0 || n_full == 0 {
        return Err(Error::InvalidArgument("n and n_full must be at least 1".into()));
    }
    let rotation = 2.0 * PI * ((seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64);
    let radius = 2.0 * (n.min(n_full) as f64 / n_full as f64).sqrt();
    let upper = |big_q: f64, big_p: f64| {
        crate::classical::shell_roots_q_clamped(0.0, big_q, big_p, epsilon_m, params, 0.0)
            .last()
            .map(|r| r.q)
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let r = (radius * ((i as f64 + 0.5) / n as f64).sqrt()).min(2.0);
        let a = rotation + i as f64 * GOLDEN_ANGLE;
        let (c, s) = (a.cos(), a.sin());
        let point = match upper(r * c, r * s) {
            Some(q) => PhasePoint::new(q, 0.0, r * c, r * s),
            None => {
                // Largest feasible radius below r along the same ray.
                let (mut lo, mut hi) = (0.0, r);
                if upper(0.0, 0.0).is_none() {
                    return Err(Error::ShellEdge(format!("no centroid on the shell at epsilon = {epsilon_m}")));
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if upper(mid * c, mid * s).is_some() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let q = upper(lo * c, lo * s).expect("feasible radius");
                PhasePoint::new(q, 0.0, lo * c, lo * s)
            }
        };
        out.push(point);
    }
    Ok(out)
}

/// Equal mixture of the `n` saturation centroids.
pub fn saturate_bloch(n: usize, epsilon_m: f64, n_full: usize, seed: u64, params: &ModelParams) -> Result<QuantumState> {
    let pts = saturation_centroids(n, epsilon_m, n_full, seed, params)?;
    QuantumState::coherent_mixture(&pts, params)
}

/// Default lattice size at which the disk is full: one centroid per
/// `π/j` of area, so neighbours sit about one coherent width apart.
pub fn default_saturation_size(params: &ModelParams) -> usize {
    (4.0 * params.j()).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve, BasisTag, SolveOptions};
    use proptest::prelude::*;

    fn params(j: f64) -> ModelParams {
        ModelParams::resonant(j).unwrap()
    }

    #[test]
    fn origin_is_vacuum_south_pole() {
        let p = params(2.0);
        let b = FockBasisSpec::new(&p, 6);
        let v = coherent_fock_coefficients(&PhasePoint::default(), &b).unwrap();
        assert!((v.coeffs[0].re - 1.0).abs() < 1e-15);
        assert!(v.coeffs[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn rim_puts_all_weight_on_top_state() {
        let amps = bloch_amplitudes(0.0, 2.0, 6);
        assert!(amps[..6].iter().all(|c| c.norm() < 1e-15));
        assert!((amps[6].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_tail_is_reported() {
        let p = params(2.0);
        let b = FockBasisSpec::new(&p, 5);
        let x = PhasePoint::new(3.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            coherent_fock_coefficients(&x, &b),
            Err(Error::TruncationTail { .. })
        ));
    }

    proptest! {
        #[test]
        fn coherent_overlaps_match_closed_form(
            q1 in -1.5f64..1.5, p1 in -1.5f64..1.5, r1 in 0.0f64..2.0, f1 in 0.0f64..6.28,
            q2 in -1.5f64..1.5, p2 in -1.5f64..1.5, r2 in 0.0f64..2.0, f2 in 0.0f64..6.28,
        ) {
            let par = params(1.5);
            let basis = FockBasisSpec::new(&par, 40);
            let x = PhasePoint::new(q1, p1, r1 * f1.cos(), r1 * f1.sin());
            let y = PhasePoint::new(q2, p2, r2 * f2.cos(), r2 * f2.sin());
            let vx = coherent_fock_coefficients(&x, &basis).unwrap();
            let vy = coherent_fock_coefficients(&y, &basis).unwrap();
            prop_assert!((vx.norm_sqr() - 1.0).abs() < 1e-12);
            let numeric = vx.inner(&vy).norm_sqr();
            prop_assert!((numeric - coherent_overlap_sq(&x, &y, 1.5)).abs() < 1e-10);
        }

        #[test]
        fn distance_matches_spherical_oracle(
            r1 in 0.0f64..2.0, f1 in 0.0f64..6.28, r2 in 0.0f64..2.0, f2 in 0.0f64..6.28, dq in -1.0f64..1.0,
        ) {
            let x = PhasePoint::new(0.3, 0.1, r1 * f1.cos(), r1 * f1.sin());
            let y = PhasePoint::new(0.3 + dq, 0.1, r2 * f2.cos(), r2 * f2.sin());
            let (tx, px) = bloch_angles(x.Q, x.P);
            let (ty, py) = bloch_angles(y.Q, y.P);
            let cos_big = tx.cos() * ty.cos() + (px - py).cos() * tx.sin() * ty.sin();
            let big = cos_big.clamp(-1.0, 1.0).acos();
            prop_assume!(big > 1e-3 && big < PI - 1e-3);
            let oracle = (dq * dq + big * big).sqrt();
            prop_assert!((phase_space_distance(&x, &y) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_trivial_cases() {
        let x = PhasePoint::new(0.5, -0.2, 0.3, 1.1);
        assert_eq!(phase_space_distance(&x, &x), 0.0);
        let south = PhasePoint::new(0.0, 0.0, 0.0, 0.0);
        let north = PhasePoint::new(0.0, 0.0, 2.0, 0.0);
        assert!((phase_space_distance(&south, &north) - PI).abs() < 1e-12);
    }

    #[test]
    fn eigenstate_moments_are_sharp() {
        let p = params(1.0);
        let spec = Arc::new(solve(&p, BasisTag::Fock { n_max: 30 }, &SolveOptions::default()).unwrap());
        let ctx = FockContext::new(&p, 30).unwrap();
        for k in [0, 3, 10] {
            let eig = EigenVector::eigenstate(spec.clone(), k);
            let (e, s) = energy_moments(&QuantumState::Pure(PureState::Eigen(eig.clone())), &ctx).unwrap();
            assert!((e - spec.scaled_energy(k)).abs() < 1e-12 && s < 1e-7);
            let fock = eig.to_fock().unwrap();
            let (e2, s2) = energy_moments(&QuantumState::Pure(PureState::Fock(fock)), &ctx).unwrap();
            assert!((e2 - e).abs() < 1e-10 && s2 < 1e-6, "{s2}");
        }
    }

    #[test]
    fn ensemble_mean_is_weight_average() {
        let p = params(2.0);
        let ctx = FockContext::new(&p, 60).unwrap();
        let xs = [PhasePoint::new(1.0, 0.0, 0.2, 0.0), PhasePoint::new(-0.5, 0.4, 0.0, -1.0)];
        let ws = [0.3, 0.7];
        let mut expect = 0.0;
        let mut comps = Vec::new();
        for (x, w) in xs.iter().zip(ws) {
            let s = PureState::Coherent(CoherentState::new(*x, &p).unwrap());
            expect += w * energy_moments(&QuantumState::Pure(s.clone()), &ctx).unwrap().0;
            comps.push((w, s));
        }
        let mix = QuantumState::ensemble(comps).unwrap();
        assert!((energy_moments(&mix, &ctx).unwrap().0 - expect).abs() < 1e-12);
    }

    #[test]
    fn ensemble_weights_are_validated() {
        let p = params(1.0);
        let s = PureState::Coherent(CoherentState::new(PhasePoint::default(), &p).unwrap());
        assert!(QuantumState::ensemble(vec![(0.5, s.clone()), (0.4, s.clone())]).is_err());
        assert!(QuantumState::ensemble(vec![(-0.5, s.clone()), (1.5, s)]).is_err());
    }

    #[test]
    fn evolution_is_unitary_and_starts_at_coherent_state() {
        let p = params(1.0);
        let spec = Arc::new(solve(&p, BasisTag::Fock { n_max: 60 }, &SolveOptions::default()).unwrap());
        let x = PhasePoint::new(1.0, 0.3, -0.5, 0.2);
        let c0 = evolve(&x, &spec, 0.0).unwrap();
        let fock0 = c0.to_fock().unwrap();
        let direct = coherent_fock_coefficients(&x, &spec.fock_basis().unwrap()).unwrap();
        assert!((fock0.inner(&direct).norm() - 1.0).abs() < 1e-10);
        let ctx = FockContext::new(&p, 60).unwrap();
        let m0 = energy_moments(&QuantumState::Pure(PureState::Eigen(c0.clone())), &ctx).unwrap();
        for t in [0.5, 3.0, 40.0] {
            let ct = c0.evolved(t);
            assert!((ct.norm_sqr() - c0.norm_sqr()).abs() < 1e-12);
            let mt = energy_moments(&QuantumState::Pure(PureState::Eigen(ct)), &ctx).unwrap();
            assert!((mt.0 - m0.0).abs() < 1e-8 && (mt.1 - m0.1).abs() < 1e-8);
        }
    }

    #[test]
    fn survival_probability_decays_quadratically() {
        let p = params(1.0);
        let spec = Arc::new(solve(&p, BasisTag::Fock { n_max: 60 }, &SolveOptions::default()).unwrap());
        let ctx = FockContext::new(&p, 60).unwrap();
        let x = PhasePoint::new(1.0, 0.3, -0.5, 0.2);
        let c0 = evolve(&x, &spec, 0.0).unwrap();
        let (_, sigma) = energy_moments(&QuantumState::coherent(x, &p).unwrap(), &ctx).unwrap();
        let j = p.j();
        for t in [1e-3, 3e-3] {
            let ct = c0.evolved(t);
            let amp: Complex64 = c0.coeffs.iter().zip(&ct.coeffs).map(|(a, b)| a.conj() * b).sum();
            let expect = 1.0 - (j * sigma * t).powi(2);
            assert!((amp.norm_sqr() - expect).abs() < 10.0 * t.powi(4) * (j * sigma).powi(4) + 1e-12);
        }
    }

    #[test]
    fn averaging_kernel_limits() {
        assert_eq!(averaging_kernel(1.3, 0.0), Complex64::new(1.0, 0.0));
        assert!(averaging_kernel(1.3, 1e7).norm() < 1e-6);
        // Series 1 − ix/2 − x²/6 at small x, closed form elsewhere.
        let x = 1e-9;
        assert!((averaging_kernel(1.0, x) - Complex64::new(1.0, -x / 2.0)).norm() < 1e-17);
        let x = 0.7;
        let direct = (Complex64::from_polar(1.0, -x) - 1.0) / Complex64::new(0.0, -x);
        assert!((averaging_kernel(2.0, 0.35) - direct).norm() < 1e-15);
    }

    #[test]
    fn separation_members_stay_on_shell() {
        let p = params(10.0);
        let x = PhasePoint::new(2.894, 0.0, -0.4, 0.0);
        let eps = h_cl(&x, &p).unwrap();
        let grid = [0.0, 0.5, 1.0, 1.5, 2.0];
        for mode in [SeparationMode::Atomic, SeparationMode::Bosonic] {
            let fam = separation_family(&x, mode, eps, &grid, 1.0, &p, None).unwrap();
            assert_eq!(fam[0].achieved_d, 0.0);
            for m in &fam {
                assert!((h_cl(&m.y, &p).unwrap() - eps).abs() < 1e-9);
                assert!((m.achieved_d - m.target_d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn separation_reports_shell_edge() {
        let p = params(10.0);
        let x = PhasePoint::new(2.894, 0.0, -0.4, 0.0);
        let eps = h_cl(&x, &p).unwrap();
        let r = separation_family(&x, SeparationMode::Bosonic, eps, &[50.0], 1.0, &p, None);
        assert!(matches!(r, Err(Error::ShellEdge(_))));
    }

    #[test]
    fn saturation_lattice_is_on_shell_and_uniform() {
        let p = params(10.0);
        let pts = saturation_centroids(100, 1.0, 100, 0, &p).unwrap();
        let mut nn = Vec::new();
        for (i, a) in pts.iter().enumerate() {
            assert!((h_cl(a, &p).unwrap() - 1.0).abs() < 1e-9);
            let d = pts
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, b)| ((a.Q - b.Q).powi(2) + (a.P - b.P).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            nn.push(d);
        }
        let lo = nn.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = nn.iter().cloned().fold(0.0, f64::max);
        assert!(hi / lo < 2.0, "spacing ratio {}", hi / lo);
        let one = saturation_centroids(1, 1.0, 100, 0, &p).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn saturation_pulls_infeasible_points_inward() {
        // Below ε = 0 the rim of the disk is off the shell.
        let p = params(10.0);
        let pts = saturation_centroids(30, -0.5, 30, 3, &p).unwrap();
        for x in &pts {
            assert!((h_cl(x, &p).unwrap() + 0.5).abs() < 1e-9);
        }
        assert!(pts.iter().any(|x| x.z2() < 3.9));
    }
}
