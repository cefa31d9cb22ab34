//! Dicke Hamiltonian in the Fock basis `|n> ⊗ |j, m_z>` and in the efficient
//! basis `|N> ⊗ |j, m_x>` built on the displaced annihilation operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

mod spectrum;
mod store;

pub use store::SpectrumSidecar;

pub use spectrum::{convergence_filter, diagonalize, solve, SolveOptions, Spectrum};

/// Physical constants of the Dicke model. `j` is stored doubled so that
/// half-integer pseudo-spins are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct ModelParams {
    pub omega: f64,
    pub omega0: f64,
    pub gamma: f64,
    two_j: u32,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    omega: f64,
    omega0: f64,
    gamma: f64,
    j: f64,
}

impl TryFrom<ParamsRepr> for ModelParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        ModelParams::new(r.omega, r.omega0, r.gamma, r.j)
    }
}

impl From<ModelParams> for ParamsRepr {
    fn from(p: ModelParams) -> Self {
        ParamsRepr {
            omega: p.omega,
            omega0: p.omega0,
            gamma: p.gamma,
            j: p.j(),
        }
    }
}

impl ModelParams {
    pub fn new(omega: f64, omega0: f64, gamma: f64, j: f64) -> Result<Self> {
        if !(omega > 0.0) || !(omega0 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "frequencies must be positive (omega = {omega}, omega0 = {omega0})"
            )));
        }
        if !(gamma >= 0.0) {
            return Err(Error::InvalidParams(format!("coupling must be non-negative, got {gamma}")));
        }
        let two_j = 2.0 * j;
        if !(j >= 0.5) || (two_j - two_j.round()).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "j must be a positive integer or half-integer, got {j}"
            )));
        }
        Ok(Self {
            omega,
            omega0,
            gamma,
            two_j: two_j.round() as u32,
        })
    }

    /// Resonant, superradiant configuration ω = ω₀ = γ = 1.
    pub fn resonant(j: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, j)
    }

    /// Same frequencies with a different ω₀ (used for the ω₀ → 0 checks,
    /// which bypass the positivity requirement).
    pub fn with_omega0_unchecked(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    /// Dimension of the pseudo-spin multiplet, 2j + 1.
    pub fn atomic_dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// Critical coupling γ_c = √(ωω₀)/2.
    pub fn gamma_c(&self) -> f64 {
        (self.omega * self.omega0).sqrt() / 2.0
    }

    /// Effective Planck constant 1/j.
    pub fn hbar_eff(&self) -> f64 {
        1.0 / self.j()
    }
}

/// Truncated Fock basis: bosonic levels `0..=n_max` times the spin multiplet.
/// Flat index is `n * (2j + 1) + (m_z + j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockBasisSpec {
    pub two_j: u32,
    pub n_max: usize,
}

impl FockBasisSpec {
    pub fn new(params: &ModelParams, n_max: usize) -> Self {
        Self {
            two_j: params.two_j(),
            n_max,
        }
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn atomic_dim(&self) -> usize {
        self.two_j as usize + 1
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1) * self.atomic_dim()
    }

    /// Flat index of `(n, k)` where `k = m_z + j ∈ 0..=2j`.
    pub fn index(&self, n: usize, k: usize) -> usize {
        debug_assert!(n <= self.n_max && k < self.atomic_dim());
        n * self.atomic_dim() + k
    }

    /// Inverse of [`index`](Self::index).
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.atomic_dim(), idx % self.atomic_dim())
    }

    /// m_z for spin slot `k`.
    pub fn m_of(&self, k: usize) -> f64 {
        k as f64 - self.j()
    }

    /// Eigenvalue ±1 of the parity exp(iπ(n + m_z + j)).
    pub fn parity(&self, idx: usize) -> i8 {
        let (n, k) = self.split(idx);
        if (n + k) % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

/// Truncated efficient basis: displaced levels `0..=n_max` times the J_x
/// multiplet. Flat index is `N * (2j + 1) + (m_x + j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficientBasisSpec {
    pub two_j: u32,
    pub n_max: usize,
}

impl EfficientBasisSpec {
    /// Displacement `δ = 2γ/(ω√(2j))`: level `|N>_A` of the `m_x` sector is
    /// `D(−δ m_x)|N>`.
    pub fn displacement(params: &ModelParams) -> f64 {
        2.0 * params.gamma / (params.omega * (2.0 * params.j()).sqrt())
    }

    pub fn new(params: &ModelParams, n_max: usize) -> Self {
        Self {
            two_j: params.two_j(),
            n_max,
        }
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn atomic_dim(&self) -> usize {
        self.two_j as usize + 1
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1) * self.atomic_dim()
    }
}

/// Basis in which a matrix or eigenvector set is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisTag {
    Fock { n_max: usize },
    Efficient { n_max: usize },
}

impl BasisTag {
    pub fn n_max(&self) -> usize {
        match *self {
            BasisTag::Fock { n_max } | BasisTag::Efficient { n_max } => n_max,
        }
    }

    pub fn dim(&self, params: &ModelParams) -> usize {
        (self.n_max() + 1) * params.atomic_dim()
    }
}

fn spin_ladder(j: f64, m: f64, up: bool) -> f64 {
    let mm = if up { m * (m + 1.0) } else { m * (m - 1.0) };
    (j * (j + 1.0) - mm).max(0.0).sqrt()
}

fn check_two_j(params: &ModelParams, two_j: u32) -> Result<()> {
    if params.two_j() != two_j {
        return Err(Error::DimensionMismatch {
            expected: params.atomic_dim(),
            found: two_j as usize + 1,
        });
    }
    Ok(())
}

/// H = ω a†a + ω₀ J_z + γ/√(2j) (J₊ + J₋)(a† + a) in the Fock basis.
pub fn build_fock_hamiltonian(params: &ModelParams, basis: &FockBasisSpec) -> Result<CsrMatrix> {
    check_two_j(params, basis.two_j)?;
    let j = params.j();
    let coupling = params.gamma / (2.0 * j).sqrt();
    let na = basis.atomic_dim();
    let mut triplets = Vec::with_capacity(basis.dim() * 5);
    for n in 0..=basis.n_max {
        for k in 0..na {
            let m = basis.m_of(k);
            let i = basis.index(n, k);
            triplets.push((i, i, params.omega * n as f64 + params.omega0 * m));
            if n < basis.n_max && params.gamma != 0.0 {
                let boson = ((n + 1) as f64).sqrt();
                if k + 1 < na {
                    let v = coupling * boson * spin_ladder(j, m, true);
                    let t = basis.index(n + 1, k + 1);
                    triplets.push((i, t, v));
                    triplets.push((t, i, v));
                }
                if k > 0 {
                    let v = coupling * boson * spin_ladder(j, m, false);
                    let t = basis.index(n + 1, k - 1);
                    triplets.push((i, t, v));
                    triplets.push((t, i, v));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(basis.dim(), triplets))
}

/// Eigenvectors of J_x in the J_z basis: column `m_x + j` holds `|j, m_x>`
/// over rows `m_z + j`.
///
/// Phases follow the ladder of the rotated frame `J'_z = J_x`, `J'_x = −J_z`,
/// `J'_y = J_y`, which is the convention of the efficient Hamiltonian. The
/// entries are real.
pub fn jx_eigenbasis(two_j: u32) -> ndarray::Array2<f64> {
    let n = two_j as usize + 1;
    let j = two_j as f64 / 2.0;
    let lnf = ln_factorials(n - 1);
    let mut out = ndarray::Array2::<f64>::zeros((n, n));
    // |m_x = j> has amplitudes √binom(2j, k) / 2^j.
    let mut v: Vec<f64> = (0..n)
        .map(|k| (0.5 * (lnf[n - 1] - lnf[k] - lnf[n - 1 - k]) - j * std::f64::consts::LN_2).exp())
        .collect();
    for col in (0..n).rev() {
        for (k, x) in v.iter().enumerate() {
            out[[k, col]] = *x;
        }
        if col == 0 {
            break;
        }
        // J'_− = −J_z − (J₊ − J₋)/2, then normalize.
        let m = col as f64 - j;
        let norm = spin_ladder(j, m, false);
        let next: Vec<f64> = (0..n)
            .map(|k| {
                let mz = k as f64 - j;
                let mut acc = -mz * v[k];
                if k > 0 {
                    acc -= 0.5 * spin_ladder(j, mz - 1.0, true) * v[k - 1];
                }
                if k + 1 < n {
                    acc += 0.5 * spin_ladder(j, mz + 1.0, false) * v[k + 1];
                }
                acc / norm
            })
            .collect();
        v = next;
    }
    out
}

/// Natural logs of 0!, 1!, ..., n!.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Matrix `O[a][b] = <a| D(delta) |b>` of the displacement operator for real
/// `delta`, for Fock levels `a, b ∈ 0..=n_max`.
///
/// Uses the associated-Laguerre closed form evaluated in log space:
/// for a ≥ b, `O = √(b!/a!) δ^{a−b} e^{−δ²/2} L_b^{(a−b)}(δ²)` and the
/// mirrored expression with `−δ` for a < b.
pub fn displaced_overlap_matrix(delta: f64, n_max: usize) -> Vec<Vec<f64>> {
    let size = n_max + 1;
    let mut out = vec![vec![0.0; size]; size];
    if delta == 0.0 {
        for (i, row) in out.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        return out;
    }
    let lnf = ln_factorials(n_max);
    let x = delta * delta;
    let ln_abs = delta.abs().ln();
    for shift in 0..size {
        // L_n^{(shift)}(x) for n = 0..size-shift by the three-term recurrence.
        let len = size - shift;
        let mut lag = vec![0.0f64; len];
        let k = shift as f64;
        lag[0] = 1.0;
        if len > 1 {
            lag[1] = 1.0 + k - x;
        }
        for n in 1..len.saturating_sub(1) {
            let nf = n as f64;
            lag[n + 1] = ((2.0 * nf + 1.0 + k - x) * lag[n] - (nf + k) * lag[n - 1]) / (nf + 1.0);
        }
        for (low, &l) in lag.iter().enumerate() {
            let high = low + shift;
            if l == 0.0 {
                continue;
            }
            let log_mag = 0.5 * (lnf[low] - lnf[high]) + k * ln_abs - 0.5 * x + l.abs().ln();
            let mag = log_mag.exp();
            let sign_l = l.signum();
            // a = high, b = low uses +δ; a = low, b = high uses −δ.
            let odd = shift % 2 == 1;
            let s_pos = if odd && delta < 0.0 { -1.0 } else { 1.0 };
            let s_neg = if odd && delta > 0.0 { -1.0 } else { 1.0 };
            out[high][low] = sign_l * s_pos * mag;
            out[low][high] = sign_l * s_neg * mag;
        }
    }
    out
}

/// Dicke Hamiltonian in the efficient basis.
///
/// Writing `A = a + (2γ/(ω√(2j))) J_x`, the Hamiltonian becomes
/// `ω A†A − (2γ²/(ωj)) J_x² + ω₀ J_z`; the first two terms are diagonal in
/// `|N> ⊗ |j, m_x>` and `ω₀ J_z = −ω₀ J'_x` couples neighbouring `m_x` through
/// displaced-oscillator overlaps with shift `2γ/(ω√(2j))`.
pub fn build_efficient_hamiltonian(params: &ModelParams, basis: &EfficientBasisSpec) -> Result<CsrMatrix> {
    check_two_j(params, basis.two_j)?;
    let j = params.j();
    let na = basis.atomic_dim();
    let size = basis.n_max + 1;
    let idx = |n: usize, k: usize| n * na + k;
    let delta = EfficientBasisSpec::displacement(params);
    let overlap = displaced_overlap_matrix(delta, basis.n_max);
    let shift = 2.0 * params.gamma * params.gamma / (params.omega * j);
    let mut triplets = Vec::new();
    for n in 0..size {
        for k in 0..na {
            let m = k as f64 - j;
            let i = idx(n, k);
            triplets.push((i, i, params.omega * n as f64 - shift * m * m));
        }
    }
    if params.omega0 != 0.0 {
        for k in 0..na - 1 {
            let m = k as f64 - j;
            let spin = -0.5 * params.omega0 * spin_ladder(j, m, true);
            for (np, row) in overlap.iter().enumerate() {
                for (n, &o) in row.iter().enumerate() {
                    let v = spin * o;
                    if v.abs() < 1e-16 {
                        continue;
                    }
                    // <N', m+1| H |N, m> = spin · <N'|D(δ)|N>
                    triplets.push((idx(np, k + 1), idx(n, k), v));
                    triplets.push((idx(n, k), idx(np, k + 1), v));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(basis.dim(), triplets))
}
