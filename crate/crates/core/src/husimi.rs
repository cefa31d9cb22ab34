//! Husimi functions `Q_ρ(x) = <x|ρ|x>` and their closed-form projections on
//! the atomic `(Q, P)` and bosonic `(q, p)` planes.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::PhasePoint;
use crate::error::{Error, Result};
use crate::model::{displaced_overlap_matrix, jx_eigenbasis, BasisTag, EfficientBasisSpec, FockBasisSpec, Spectrum};
use crate::states::{
    bloch_amplitudes, bloch_overlap_sq, coherent_overlap_sq, glauber_amplitudes, PureState, PureVector, QuantumState,
    TimeAveraged,
};

/// Minimum grid density in nodes per coherent-state width `√(2/j)`.
pub const MIN_RESOLUTION: usize = 8;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    /// `(Q, P)` on the Bloch disk.
    Atomic,
    /// `(q, p)` in a square box.
    Bosonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridExtent {
    Disk,
    Box { center: [f64; 2], half_width: f64 },
}

/// Quadrature nodes on a projection plane with positive weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionGrid {
    pub plane: Plane,
    pub extent: GridExtent,
    pub resolution: usize,
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl ProjectionGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

fn coherent_width(j: f64) -> f64 {
    (2.0 / j).sqrt()
}

/// Quadrature grid on a projection plane.
///
/// The disk uses Gauss–Legendre in `u = cos θ = 1 − Z²/2`, for which
/// `dQ dP = du dφ`, times the trapezoid rule in `φ`; projections of states
/// with spin `j` are polynomials on the sphere, so the rule is exact for
/// them once it has more than `2j` nodes in `u`. The bosonic plane uses a
/// Gauss–Legendre tensor grid on the given box (default: centred at the
/// origin with half-width 6).
pub fn build_projection_grid(plane: Plane, resolution: usize, j: f64, extent: Option<GridExtent>) -> Result<ProjectionGrid> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::GridResolution {
            resolution,
            floor: MIN_RESOLUTION,
        });
    }
    let width = coherent_width(j);
    let res = resolution as f64;
    match plane {
        Plane::Atomic => {
            let n_u = ((res * 2.0 / width).ceil() as usize).max((2.0 * j) as usize + 2);
            let n_phi = ((res * 4.0 * PI / width).ceil() as usize).max(4 * (2.0 * j) as usize + 2);
            let (u, wu) = gauss_legendre(n_u);
            let dphi = 2.0 * PI / n_phi as f64;
            let mut nodes = Vec::with_capacity(n_u * n_phi);
            let mut weights = Vec::with_capacity(n_u * n_phi);
            for (&ui, &wi) in u.iter().zip(&wu) {
                let r = (2.0 * (1.0 - ui)).max(0.0).sqrt();
                for a in 0..n_phi {
                    let phi = (a as f64 + 0.5) * dphi;
                    nodes.push([r * phi.cos(), r * phi.sin()]);
                    weights.push(wi * dphi);
                }
            }
            Ok(ProjectionGrid {
                plane,
                extent: GridExtent::Disk,
                resolution,
                nodes,
                weights,
            })
        }
        Plane::Bosonic => {
            let ext = extent.unwrap_or(GridExtent::Box {
                center: [0.0, 0.0],
                half_width: 6.0,
            });
            let GridExtent::Box { center, half_width } = ext else {
                return Err(Error::InvalidArgument("the bosonic plane needs a box extent".into()));
            };
            let n = (res * 2.0 * half_width / width).ceil() as usize;
            let (x, w) = gauss_legendre(n);
            let mut nodes = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (&xa, &wa) in x.iter().zip(&w) {
                for (&xb, &wb) in x.iter().zip(&w) {
                    nodes.push([center[0] + half_width * xa, center[1] + half_width * xb]);
                    weights.push(wa * wb * half_width * half_width);
                }
            }
            Ok(ProjectionGrid {
                plane,
                extent: ext,
                resolution,
                nodes,
                weights,
            })
        }
    }
}

/// `<x|ψ>` for a Fock vector, exact for any `x` because `ψ` has no weight
/// beyond the truncation.
fn fock_amplitude(psi: &PureVector, x: &PhasePoint) -> Complex64 {
    let (glauber, _) = glauber_amplitudes(x.q, x.p, psi.basis.j(), psi.basis.n_max);
    let bloch = bloch_amplitudes(x.Q, x.P, psi.basis.two_j);
    let na = bloch.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, a) in glauber.iter().enumerate() {
        let row = &psi.coeffs[n * na..(n + 1) * na];
        let s: Complex64 = row.iter().zip(&bloch).map(|(c, b)| b.conj() * c).sum();
        acc += a.conj() * s;
    }
    acc
}

enum Prepared {
    Fock(PureVector),
    Coherent { point: PhasePoint, j: f64 },
    Efficient { basis: AmplitudeBasis, coeffs: Vec<Complex64> },
}

impl Prepared {
    fn from_pure(s: &PureState) -> Result<Self> {
        Ok(match s {
            PureState::Fock(v) => Prepared::Fock(v.clone()),
            PureState::Coherent(c) => Prepared::Coherent {
                point: c.point,
                j: c.j(),
            },
            PureState::Eigen(e) => match e.spectrum.basis {
                BasisTag::Fock { .. } => Prepared::Fock(e.to_fock()?),
                BasisTag::Efficient { .. } => Prepared::Efficient {
                    basis: AmplitudeBasis::of_spectrum(&e.spectrum),
                    coeffs: e.basis_coefficients(),
                },
            },
        })
    }

    fn husimi(&self, x: &PhasePoint) -> f64 {
        match self {
            Prepared::Fock(v) => fock_amplitude(v, x).norm_sqr(),
            Prepared::Coherent { point, j } => coherent_overlap_sq(point, x, *j),
            Prepared::Efficient { basis, coeffs } => {
                let row = basis.row(x);
                row.iter().zip(coeffs).map(|(r, c)| r * c).sum::<Complex64>().norm_sqr()
            }
        }
    }
}

/// Basis of a set of eigenvector columns, with what is needed to evaluate
/// `<x|basis state>`.
enum AmplitudeBasis {
    Fock(FockBasisSpec),
    /// `|N>_A ⊗ |j, m_x>` with `|N>_A = D(−δ m_x)|N>`; `rotation` holds the
    /// J_x eigenvectors in the J_z basis.
    Efficient {
        spec: EfficientBasisSpec,
        delta: f64,
        rotation: Array2<f64>,
    },
}

impl AmplitudeBasis {
    fn of_spectrum(spectrum: &Spectrum) -> Self {
        let p = &spectrum.params;
        match spectrum.basis {
            BasisTag::Fock { n_max } => AmplitudeBasis::Fock(FockBasisSpec { two_j: p.two_j(), n_max }),
            BasisTag::Efficient { n_max } => AmplitudeBasis::Efficient {
                spec: EfficientBasisSpec::new(p, n_max),
                delta: EfficientBasisSpec::displacement(p),
                rotation: jx_eigenbasis(p.two_j()),
            },
        }
    }

    fn dim(&self) -> usize {
        match self {
            AmplitudeBasis::Fock(b) => b.dim(),
            AmplitudeBasis::Efficient { spec, .. } => spec.dim(),
        }
    }

    /// `<x|i>` for every basis state `i`.
    fn row(&self, x: &PhasePoint) -> Vec<Complex64> {
        match self {
            AmplitudeBasis::Fock(basis) => {
                let (g, _) = glauber_amplitudes(x.q, x.p, basis.j(), basis.n_max);
                let b = bloch_amplitudes(x.Q, x.P, basis.two_j);
                let mut row = Vec::with_capacity(basis.dim());
                for a in &g {
                    for c in &b {
                        row.push((a * c).conj());
                    }
                }
                row
            }
            AmplitudeBasis::Efficient { spec, delta, rotation } => {
                let j = spec.j();
                let na = spec.atomic_dim();
                let b = bloch_amplitudes(x.Q, x.P, spec.two_j);
                // <m_x|Q,P> = Σ_k R[k, m_x] <k|Q,P>.
                let s: Vec<Complex64> = (0..na)
                    .map(|col| b.iter().enumerate().map(|(k, bk)| bk * rotation[[k, col]]).sum())
                    .collect();
                let im_alpha = (j / 2.0).sqrt() * x.p;
                // <α|D(β)|N> = e^{−iβ Im α} conj(<N|α − β>) for real β.
                let per_sector: Vec<Vec<Complex64>> = (0..na)
                    .map(|col| {
                        let beta = -delta * (col as f64 - j);
                        let (g, _) = glauber_amplitudes(x.q - beta * (2.0 / j).sqrt(), x.p, j, spec.n_max);
                        let phase = Complex64::from_polar(1.0, beta * im_alpha);
                        g.into_iter().map(|gn| (phase * gn * s[col]).conj()).collect()
                    })
                    .collect();
                let mut row = Vec::with_capacity(spec.dim());
                for n in 0..=spec.n_max {
                    for sector in &per_sector {
                        row.push(sector[n]);
                    }
                }
                row
            }
        }
    }

    /// Rows of many points, split in real and imaginary parts (`points × D`).
    fn rows(&self, points: &[PhasePoint]) -> (Array2<f64>, Array2<f64>) {
        let rows: Vec<Vec<Complex64>> = points.par_iter().map(|x| self.row(x)).collect();
        let d = self.dim();
        let re = Array2::from_shape_fn((points.len(), d), |(i, k)| rows[i][k].re);
        let im = Array2::from_shape_fn((points.len(), d), |(i, k)| rows[i][k].im);
        (re, im)
    }
}

/// Reduced spin density matrix `Tr_b |ψ><ψ|` in the J_z basis for a vector
/// in the efficient basis.
fn efficient_spin_density(spec: &EfficientBasisSpec, delta: f64, rotation: &Array2<f64>, coeffs: &[Complex64]) -> Array2<Complex64> {
    let na = spec.atomic_dim();
    let nb = spec.n_max + 1;
    let col = |m: usize| -> Vec<Complex64> { (0..nb).map(|n| coeffs[n * na + m]).collect() };
    let cols: Vec<Vec<Complex64>> = (0..na).map(col).collect();
    // _{m''}<N'|N>_{m'} = <N'|D(δ(m'' − m'))|N>, one matrix per difference.
    let overlaps: Vec<Vec<Vec<f64>>> = (0..2 * na - 1)
        .into_par_iter()
        .map(|d| displaced_overlap_matrix(delta * (d as f64 - (na - 1) as f64), spec.n_max))
        .collect();
    let mut rho = Array2::<Complex64>::zeros((na, na));
    for a in 0..na {
        for b in 0..na {
            // ρ'[a, b] = Σ c_{N,a} conj(c_{N',b}) <N'|D(δ(b − a))|N>
            let o = &overlaps[b + na - 1 - a];
            let mut acc = Complex64::new(0.0, 0.0);
            for (np, row) in o.iter().enumerate() {
                let mut inner = Complex64::new(0.0, 0.0);
                for (n, &v) in row.iter().enumerate() {
                    inner += cols[a][n] * v;
                }
                acc += cols[b][np].conj() * inner;
            }
            rho[[a, b]] = acc;
        }
    }
    let r = rotation.mapv(|v| Complex64::new(v, 0.0));
    r.dot(&rho).dot(&r.t())
}

/// Eigenvectors of the retained states (Fock basis, `D × K`) and the
/// time-averaged density matrix over them.
struct AveragedParts {
    basis: AmplitudeBasis,
    vectors: Array2<f64>,
    density: Array2<Complex64>,
}

impl AveragedParts {
    fn new(t: &TimeAveraged) -> Result<Self> {
        Ok(Self {
            basis: AmplitudeBasis::of_spectrum(&t.initial.spectrum),
            vectors: select_columns(&t.initial.spectrum, &t.initial.indices),
            density: t.density_matrix(),
        })
    }
}

fn select_columns(spectrum: &Spectrum, indices: &[usize]) -> Array2<f64> {
    spectrum.eigenvectors.select(Axis(1), indices)
}

/// A state prepared for repeated Husimi evaluation.
pub struct HusimiEvaluator {
    mixture: Vec<(f64, Prepared)>,
    averaged: Option<AveragedParts>,
}

impl HusimiEvaluator {
    pub fn new(state: &QuantumState) -> Result<Self> {
        match state {
            QuantumState::Pure(s) => Ok(Self {
                mixture: vec![(1.0, Prepared::from_pure(s)?)],
                averaged: None,
            }),
            QuantumState::Ensemble(comps) => Ok(Self {
                mixture: comps
                    .iter()
                    .map(|(w, s)| Ok((*w, Prepared::from_pure(s)?)))
                    .collect::<Result<_>>()?,
                averaged: None,
            }),
            QuantumState::TimeAveraged(t) => Ok(Self {
                mixture: Vec::new(),
                averaged: Some(AveragedParts::new(t)?),
            }),
        }
    }

    pub fn eval(&self, x: &PhasePoint) -> Result<f64> {
        x.check_bloch()?;
        Ok(self.eval_many(std::slice::from_ref(x))?[0])
    }

    /// Husimi values at many points, in input order.
    pub fn eval_many(&self, points: &[PhasePoint]) -> Result<Vec<f64>> {
        if let Some(avg) = &self.averaged {
            let amps = EigenAmplitudes::from_vectors(&avg.basis, avg.vectors.view(), points);
            return Ok(amps.averaged(&avg.density));
        }
        Ok(points
            .par_iter()
            .map(|x| self.mixture.iter().map(|(w, s)| w * s.husimi(x)).sum())
            .collect())
    }
}

/// Q_ρ(x).
pub fn husimi(state: &QuantumState, x: &PhasePoint) -> Result<f64> {
    HusimiEvaluator::new(state)?.eval(x)
}

/// Q_ρ at every point, in order.
pub fn husimi_many(state: &QuantumState, points: &[PhasePoint]) -> Result<Vec<f64>> {
    HusimiEvaluator::new(state)?.eval_many(points)
}

/// Overlaps `u_{x,k} = <x|E_k>` of a set of points with a set of
/// eigenvectors, for fast Husimi evaluation of many eigenbasis states on
/// the same points.
pub struct EigenAmplitudes {
    re: Array2<f64>,
    im: Array2<f64>,
}

const POINT_CHUNK: usize = 4096;

impl EigenAmplitudes {
    pub fn new(spectrum: &Spectrum, indices: &[usize], points: &[PhasePoint]) -> Result<Self> {
        let basis = AmplitudeBasis::of_spectrum(spectrum);
        Ok(Self::from_vectors(&basis, select_columns(spectrum, indices).view(), points))
    }

    fn from_vectors(basis: &AmplitudeBasis, vectors: ArrayView2<f64>, points: &[PhasePoint]) -> Self {
        let k = vectors.ncols();
        let mut re = Array2::<f64>::zeros((points.len(), k));
        let mut im = Array2::<f64>::zeros((points.len(), k));
        for (c, chunk) in points.chunks(POINT_CHUNK).enumerate() {
            let (xr, xi) = basis.rows(chunk);
            let lo = c * POINT_CHUNK;
            let hi = lo + chunk.len();
            re.slice_mut(s![lo..hi, ..]).assign(&xr.dot(&vectors));
            im.slice_mut(s![lo..hi, ..]).assign(&xi.dot(&vectors));
        }
        Self { re, im }
    }

    pub fn n_points(&self) -> usize {
        self.re.nrows()
    }

    /// `|Σ_k u_{x,k} c_k|²` for every point.
    pub fn pure(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let cr = ndarray::Array1::from_iter(coeffs.iter().map(|c| c.re));
        let ci = ndarray::Array1::from_iter(coeffs.iter().map(|c| c.im));
        let a = self.re.dot(&cr) - self.im.dot(&ci);
        let b = self.re.dot(&ci) + self.im.dot(&cr);
        a.iter().zip(b.iter()).map(|(x, y)| x * x + y * y).collect()
    }

    /// `Σ_{kl} M_kl u_{x,k} conj(u_{x,l})` for every point.
    pub fn averaged(&self, m: &Array2<Complex64>) -> Vec<f64> {
        let mr = m.mapv(|c| c.re);
        let mi = m.mapv(|c| c.im);
        // V = U M, then Q = Σ_l V_l conj(U_l).
        let vr = self.re.dot(&mr) - self.im.dot(&mi);
        let vi = self.re.dot(&mi) + self.im.dot(&mr);
        (0..self.n_points())
            .map(|i| {
                let mut acc = 0.0;
                for l in 0..self.re.ncols() {
                    acc += vr[[i, l]] * self.re[[i, l]] + vi[[i, l]] * self.im[[i, l]];
                }
                acc
            })
            .collect()
    }
}

/// Husimi values of several Fock vectors on shared points: entry `[s][i]`
/// is `|<x_i|ψ_s>|²`.
pub fn husimi_fock_batch(vectors: &[PureVector], points: &[PhasePoint]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = vectors.first() else {
        return Ok(Vec::new());
    };
    let basis = first.basis;
    if vectors.iter().any(|v| v.basis != basis) {
        return Err(Error::BasisMismatch("batch mixes Fock truncations".into()));
    }
    let d = basis.dim();
    let vr = Array2::from_shape_fn((d, vectors.len()), |(k, s)| vectors[s].coeffs[k].re);
    let vi = Array2::from_shape_fn((d, vectors.len()), |(k, s)| vectors[s].coeffs[k].im);
    let rows = AmplitudeBasis::Fock(basis);
    let mut out = vec![Vec::with_capacity(points.len()); vectors.len()];
    for chunk in points.chunks(POINT_CHUNK) {
        let (xr, xi) = rows.rows(chunk);
        let re = xr.dot(&vr) - xi.dot(&vi);
        let im = xr.dot(&vi) + xi.dot(&vr);
        for (s, col) in out.iter_mut().enumerate() {
            col.extend((0..chunk.len()).map(|i| re[[i, s]].powi(2) + im[[i, s]].powi(2)));
        }
    }
    Ok(out)
}

/// Fock coefficients reshaped to `levels × spin` with real and imaginary
/// parts.
fn split_matrix(psi: &PureVector) -> (Array2<f64>, Array2<f64>) {
    let na = psi.basis.atomic_dim();
    let nb = psi.basis.n_max + 1;
    let re = Array2::from_shape_fn((nb, na), |(n, k)| psi.coeffs[n * na + k].re);
    let im = Array2::from_shape_fn((nb, na), |(n, k)| psi.coeffs[n * na + k].im);
    (re, im)
}

/// Sum over rows of `|A ψ|²` with complex `A = ar + i ai` and `ψ = pr + i pi`.
fn row_norms(ar: &Array2<f64>, ai: &Array2<f64>, pr: &Array2<f64>, pi: &Array2<f64>) -> Vec<f64> {
    let real = ar.dot(pr) - ai.dot(pi);
    let imag = ar.dot(pi) + ai.dot(pr);
    real.rows()
        .into_iter()
        .zip(imag.rows())
        .map(|(r, i)| r.iter().zip(i.iter()).map(|(a, b)| a * a + b * b).sum())
        .collect()
}

/// `Σ_{m,m'} conj(b_m) ρ[m,m'] b_m'` at every node, with `conj(b) = amp`.
fn quadratic_form(amp_re: &Array2<f64>, amp_im: &Array2<f64>, rr: &Array2<f64>, ri: &Array2<f64>) -> Vec<f64> {
    let tr = amp_re.dot(rr) - amp_im.dot(ri);
    let ti = amp_re.dot(ri) + amp_im.dot(rr);
    (0..amp_re.nrows())
        .map(|i| {
            let mut acc = 0.0;
            for c in 0..tr.ncols() {
                acc += tr[[i, c]] * amp_re[[i, c]] + ti[[i, c]] * amp_im[[i, c]];
            }
            acc
        })
        .collect()
}

/// Closed-form projections of states onto the nodes of a grid.
pub struct Projector {
    grid: ProjectionGrid,
    basis: FockBasisSpec,
    /// Conjugated coherent amplitudes at the nodes: Bloch (`nodes × 2j+1`)
    /// for the atomic plane, Glauber (`nodes × n_max+1`) for the bosonic one.
    amp_re: Array2<f64>,
    amp_im: Array2<f64>,
}

impl Projector {
    pub fn new(grid: &ProjectionGrid, basis: &FockBasisSpec) -> Self {
        let rows: Vec<Vec<Complex64>> = grid
            .nodes
            .par_iter()
            .map(|&[a, b]| match grid.plane {
                Plane::Atomic => bloch_amplitudes(a, b, basis.two_j),
                Plane::Bosonic => glauber_amplitudes(a, b, basis.j(), basis.n_max).0,
            })
            .collect();
        let width = rows.first().map_or(0, |r| r.len());
        let amp_re = Array2::from_shape_fn((rows.len(), width), |(i, k)| rows[i][k].re);
        let amp_im = Array2::from_shape_fn((rows.len(), width), |(i, k)| -rows[i][k].im);
        Self {
            grid: grid.clone(),
            basis: *basis,
            amp_re,
            amp_im,
        }
    }

    pub fn grid(&self) -> &ProjectionGrid {
        &self.grid
    }

    fn project_fock(&self, psi: &PureVector) -> Result<Vec<f64>> {
        if psi.basis != self.basis {
            return Err(Error::BasisMismatch("projector and state use different Fock bases".into()));
        }
        let (pr, pi) = split_matrix(psi);
        Ok(match self.grid.plane {
            // g_n = Σ_m conj(b_m) ψ_{n,m}
            Plane::Atomic => row_norms(&self.amp_re, &self.amp_im, &pr.t().to_owned(), &pi.t().to_owned()),
            // g_m = Σ_n conj(a_n) ψ_{n,m}
            Plane::Bosonic => row_norms(&self.amp_re, &self.amp_im, &pr, &pi),
        })
    }

    fn project_efficient(
        &self,
        spec: &EfficientBasisSpec,
        delta: f64,
        rotation: &Array2<f64>,
        coeffs: &[Complex64],
    ) -> Result<Vec<f64>> {
        if self.grid.plane != Plane::Atomic || spec.two_j != self.basis.two_j {
            return Err(Error::BasisMismatch(
                "efficient-basis states project only onto an atomic grid of the same spin".into(),
            ));
        }
        let rho = efficient_spin_density(spec, delta, rotation, coeffs);
        let (rr, ri) = (rho.mapv(|c| c.re), rho.mapv(|c| c.im));
        Ok(quadratic_form(&self.amp_re, &self.amp_im, &rr, &ri))
    }

    fn project_coherent(&self, x: &PhasePoint, j: f64) -> Vec<f64> {
        self.grid
            .nodes
            .iter()
            .map(|&[a, b]| match self.grid.plane {
                Plane::Atomic => bloch_overlap_sq(x.Q, x.P, a, b, j),
                Plane::Bosonic => (-0.5 * j * ((x.q - a).powi(2) + (x.p - b).powi(2))).exp(),
            })
            .collect()
    }

    fn project_pure(&self, s: &PureState) -> Result<Vec<f64>> {
        match s {
            PureState::Fock(v) => self.project_fock(v),
            PureState::Eigen(e) => match AmplitudeBasis::of_spectrum(&e.spectrum) {
                AmplitudeBasis::Efficient { spec, delta, rotation } => {
                    self.project_efficient(&spec, delta, &rotation, &e.basis_coefficients())
                }
                AmplitudeBasis::Fock(_) => self.project_fock(&e.to_fock()?),
            },
            PureState::Coherent(c) => Ok(self.project_coherent(&c.point, c.j())),
        }
    }

    fn project_averaged(&self, t: &TimeAveraged) -> Result<Vec<f64>> {
        let parts = AveragedParts::new(t)?;
        let AmplitudeBasis::Fock(basis) = parts.basis else {
            return Err(Error::BasisMismatch("time-averaged projections need a Fock-basis spectrum".into()));
        };
        if basis != self.basis {
            return Err(Error::BasisMismatch("projector and state use different Fock bases".into()));
        }
        let na = self.basis.atomic_dim();
        let nb = self.basis.n_max + 1;
        let mr = parts.density.mapv(|c| c.re);
        let mi = parts.density.mapv(|c| c.im);
        // Blocks of ρ̄ = E M Eᵀ that survive the partial integration: fixed n
        // for the atomic plane, fixed m for the bosonic plane.
        let (n_blocks, rows_of): (usize, Box<dyn Fn(usize) -> Vec<usize> + Sync>) = match self.grid.plane {
            Plane::Atomic => (nb, Box::new(move |n| (0..na).map(|k| n * na + k).collect())),
            Plane::Bosonic => (na, Box::new(move |k| (0..nb).map(|n| n * na + k).collect())),
        };
        let partial: Vec<Vec<f64>> = (0..n_blocks)
            .into_par_iter()
            .map(|blk| {
                let e = parts.vectors.select(Axis(0), &rows_of(blk));
                let rr = e.dot(&mr).dot(&e.t());
                let ri = e.dot(&mi).dot(&e.t());
                quadratic_form(&self.amp_re, &self.amp_im, &rr, &ri)
            })
            .collect();
        let mut out = vec![0.0; self.grid.len()];
        for p in partial {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Projection values at every node: `(j/2π)∬dq dp Q_ρ` on the atomic
    /// plane, `((2j+1)/4π)∬dQ dP Q_ρ` on the bosonic plane.
    pub fn project(&self, state: &QuantumState) -> Result<Vec<f64>> {
        match state {
            QuantumState::Pure(s) => self.project_pure(s),
            QuantumState::Ensemble(comps) => {
                let mut out = vec![0.0; self.grid.len()];
                for (w, s) in comps {
                    for (o, v) in out.iter_mut().zip(self.project_pure(s)?) {
                        *o += w * v;
                    }
                }
                Ok(out)
            }
            QuantumState::TimeAveraged(t) => self.project_averaged(t),
        }
    }
}

fn single_node_projection(state: &QuantumState, plane: Plane, a: f64, b: f64, basis: FockBasisSpec) -> Result<f64> {
    let grid = ProjectionGrid {
        plane,
        extent: GridExtent::Disk,
        resolution: MIN_RESOLUTION,
        nodes: vec![[a, b]],
        weights: vec![1.0],
    };
    Ok(Projector::new(&grid, &basis).project(state)?[0])
}

fn state_basis(state: &QuantumState) -> Result<Option<FockBasisSpec>> {
    let of_pure = |s: &PureState| -> Result<Option<FockBasisSpec>> {
        Ok(match s {
            PureState::Fock(v) => Some(v.basis),
            PureState::Eigen(e) => Some(projection_basis(&e.spectrum)),
            PureState::Coherent(_) => None,
        })
    };
    match state {
        QuantumState::Pure(s) => of_pure(s),
        QuantumState::Ensemble(c) => {
            let mut found = None;
            for (_, s) in c {
                if let Some(b) = of_pure(s)? {
                    if found.is_some_and(|f| f != b) {
                        return Err(Error::BasisMismatch("ensemble mixes Fock truncations".into()));
                    }
                    found = Some(b);
                }
            }
            Ok(found)
        }
        QuantumState::TimeAveraged(t) => Ok(Some(t.initial.spectrum.fock_basis()?)),
    }
}

/// Fock basis for projections of eigenstates; efficient-basis spectra only
/// fix the spin.
pub fn projection_basis(spectrum: &Spectrum) -> FockBasisSpec {
    spectrum.fock_basis().unwrap_or(FockBasisSpec {
        two_j: spectrum.params.two_j(),
        n_max: 0,
    })
}

fn coherent_spin(state: &QuantumState) -> u32 {
    let first = match state {
        QuantumState::Pure(s) => Some(s),
        QuantumState::Ensemble(c) => c.first().map(|(_, s)| s),
        QuantumState::TimeAveraged(_) => None,
    };
    match first {
        Some(PureState::Coherent(c)) => c.two_j,
        _ => 1,
    }
}

/// Q̃(Q, P) = (j/2π)∬dq dp Q_ρ(q, p; Q, P).
#[allow(non_snake_case)]
pub fn atomic_projection(state: &QuantumState, Q: f64, P: f64) -> Result<f64> {
    PhasePoint::new(0.0, 0.0, Q, P).check_bloch()?;
    let basis = state_basis(state)?.unwrap_or(FockBasisSpec {
        two_j: coherent_spin(state),
        n_max: 0,
    });
    single_node_projection(state, Plane::Atomic, Q, P, basis)
}

/// Q̃(q, p) = ((2j+1)/4π)∬dQ dP Q_ρ(q, p; Q, P).
pub fn bosonic_projection(state: &QuantumState, q: f64, p: f64) -> Result<f64> {
    let basis = state_basis(state)?.unwrap_or(FockBasisSpec {
        two_j: coherent_spin(state),
        n_max: 0,
    });
    single_node_projection(state, Plane::Bosonic, q, p, basis)
}

/// Metadata of an exported heatmap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub plane: Plane,
    pub extent: GridExtent,
    pub resolution: usize,
    pub n_nodes: usize,
    pub state: String,
}

/// Writes `(coordinate1, coordinate2, value)` rows and a JSON sidecar.
pub fn write_heatmap(csv_path: &Path, json_path: &Path, grid: &ProjectionGrid, values: &[f64], state: &str) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    let mut w = csv::Writer::from_path(csv_path)?;
    let header = match grid.plane {
        Plane::Atomic => ["Q", "P", "value"],
        Plane::Bosonic => ["q", "p", "value"],
    };
    w.write_record(header)?;
    for (node, v) in grid.nodes.iter().zip(values) {
        w.write_record(&[node[0], node[1], *v].map(|x| format!("{x:.17e}")))?;
    }
    w.flush()?;
    let meta = HeatmapMeta {
        plane: grid.plane,
        extent: grid.extent,
        resolution: grid.resolution,
        n_nodes: grid.len(),
        state: state.to_string(),
    };
    std::fs::write(json_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::states::{coherent_fock_coefficients, CoherentState};

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // Exact up to degree 13.
        let m12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((m12 - 2.0 / 13.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(400);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn disk_weights_sum_to_four_pi() {
        let g = build_projection_grid(Plane::Atomic, 8, 10.0, None).unwrap();
        assert!((g.area() - 4.0 * PI).abs() < 1e-10);
        assert!(g.nodes.iter().all(|n| n[0] * n[0] + n[1] * n[1] <= 4.0));
        assert!(g.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn box_grid_integrates_constant_and_gaussian() {
        let ext = GridExtent::Box {
            center: [0.5, -0.2],
            half_width: 3.0,
        };
        let g = build_projection_grid(Plane::Bosonic, 8, 5.0, Some(ext)).unwrap();
        assert!((g.area() - 36.0).abs() < 1e-10);
        let vals: Vec<f64> = g
            .nodes
            .iter()
            .map(|n| (-2.5 * ((n[0] - 0.5).powi(2) + (n[1] + 0.2).powi(2))).exp())
            .collect();
        // ∫ e^{−a r²} = π/a, up to the negligible mass outside the box.
        assert!((g.integrate(&vals) - PI / 2.5).abs() < 1e-8);
    }

    #[test]
    fn resolution_floor_is_enforced() {
        assert!(matches!(
            build_projection_grid(Plane::Atomic, 4, 10.0, None),
            Err(Error::GridResolution { .. })
        ));
    }

    #[test]
    fn self_overlap_is_one() {
        let p = ModelParams::resonant(3.0).unwrap();
        let basis = FockBasisSpec::new(&p, 40);
        let x = PhasePoint::new(0.7, -0.3, 0.4, 1.2);
        let v = coherent_fock_coefficients(&x, &basis).unwrap();
        let q = husimi(&QuantumState::Pure(PureState::Fock(v)), &x).unwrap();
        assert!((q - 1.0).abs() < 1e-10);
        let c = QuantumState::coherent(x, &p).unwrap();
        assert!((husimi(&c, &x).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn origin_state_closed_form() {
        let p = ModelParams::resonant(30.0).unwrap();
        let basis = FockBasisSpec::new(&p, 30);
        let v = coherent_fock_coefficients(&PhasePoint::default(), &basis).unwrap();
        let st = QuantumState::Pure(PureState::Fock(v));
        let q = husimi(&st, &PhasePoint::new(0.2, 0.0, 0.0, 0.0)).unwrap();
        assert!((q - (-0.6f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn south_pole_vacuum_projections() {
        let p = ModelParams::resonant(4.0).unwrap();
        let basis = FockBasisSpec::new(&p, 10);
        let v = coherent_fock_coefficients(&PhasePoint::default(), &basis).unwrap();
        let st = QuantumState::Pure(PureState::Fock(v));
        for (a, b) in [(0.0, 0.0), (0.5, -0.3), (1.9, 0.2)] {
            let z2: f64 = a * a + b * b;
            let expect = (1.0 - z2 / 4.0).powi(8);
            assert!((atomic_projection(&st, a, b).unwrap() - expect).abs() < 1e-14);
            let gauss = (-2.0 * z2).exp();
            assert!((bosonic_projection(&st, a, b).unwrap() - gauss).abs() < 1e-14);
        }
    }

    #[test]
    fn coherent_analytic_and_fock_projections_agree() {
        let p = ModelParams::resonant(3.0).unwrap();
        let basis = FockBasisSpec::new(&p, 50);
        let x = PhasePoint::new(1.1, -0.4, -0.8, 0.9);
        let analytic = QuantumState::Pure(PureState::Coherent(CoherentState::new(x, &p).unwrap()));
        let fock = QuantumState::Pure(PureState::Fock(coherent_fock_coefficients(&x, &basis).unwrap()));
        for (a, b) in [(0.0, 0.0), (-0.7, 1.0), (1.5, -1.2)] {
            let d = atomic_projection(&analytic, a, b).unwrap() - atomic_projection(&fock, a, b).unwrap();
            assert!(d.abs() < 1e-10);
            let d = bosonic_projection(&analytic, a, b).unwrap() - bosonic_projection(&fock, a, b).unwrap();
            assert!(d.abs() < 1e-10);
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let p = ModelParams::resonant(2.0).unwrap();
        let basis = FockBasisSpec::new(&p, 30);
        let xs = [PhasePoint::new(0.5, 0.1, 0.3, -0.2), PhasePoint::new(-1.0, 0.4, 1.1, 0.9)];
        let vecs: Vec<PureVector> = xs.iter().map(|x| coherent_fock_coefficients(x, &basis).unwrap()).collect();
        let pts = [PhasePoint::new(0.0, 0.0, 0.0, 0.0), PhasePoint::new(0.4, 0.2, 0.5, -0.1), xs[1]];
        let batch = husimi_fock_batch(&vecs, &pts).unwrap();
        for (v, row) in vecs.iter().zip(&batch) {
            let st = QuantumState::Pure(PureState::Fock(v.clone()));
            for (x, &b) in pts.iter().zip(row) {
                assert!((husimi(&st, x).unwrap() - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn atomic_projection_integrates_to_spin_normalization() {
        let p = ModelParams::resonant(3.0).unwrap();
        let basis = FockBasisSpec::new(&p, 40);
        let x = PhasePoint::new(0.5, 0.5, 1.0, -0.5);
        let st = QuantumState::Pure(PureState::Fock(coherent_fock_coefficients(&x, &basis).unwrap()));
        let grid = build_projection_grid(Plane::Atomic, 8, 3.0, None).unwrap();
        let vals = Projector::new(&grid, &basis).project(&st).unwrap();
        assert!((grid.integrate(&vals) - 4.0 * PI / 7.0).abs() < 1e-10);
    }

    #[test]
    fn efficient_eigenstates_match_fock_eigenstates() {
        use crate::model::{solve, SolveOptions};
        use crate::states::EigenVector;
        use std::sync::Arc;
        let p = ModelParams::resonant(2.5).unwrap();
        let fock = Arc::new(solve(&p, BasisTag::Fock { n_max: 70 }, &SolveOptions::default()).unwrap());
        let eff = Arc::new(solve(&p, BasisTag::Efficient { n_max: 40 }, &SolveOptions::default()).unwrap());
        let pts = [
            PhasePoint::new(0.3, -0.2, 0.4, 0.1),
            PhasePoint::new(-1.5, 0.8, -1.2, 0.7),
            PhasePoint::new(2.0, 0.0, 0.0, -1.9),
        ];
        let grid = build_projection_grid(Plane::Atomic, 8, 2.5, None).unwrap();
        for k in [0, 3, 17] {
            assert!((fock.eigenvalues[k] - eff.eigenvalues[k]).abs() < 1e-8);
            let a = QuantumState::Pure(PureState::Eigen(EigenVector::eigenstate(fock.clone(), k)));
            let b = QuantumState::Pure(PureState::Eigen(EigenVector::eigenstate(eff.clone(), k)));
            let ha = husimi_many(&a, &pts).unwrap();
            let hb = husimi_many(&b, &pts).unwrap();
            let amps = EigenAmplitudes::new(&eff, &[k], &pts).unwrap().pure(&[Complex64::new(1.0, 0.0)]);
            for i in 0..pts.len() {
                assert!((ha[i] - hb[i]).abs() < 1e-9, "k {k}: {} vs {}", ha[i], hb[i]);
                assert!((amps[i] - hb[i]).abs() < 1e-12);
            }
            let pa = Projector::new(&grid, &fock.fock_basis().unwrap()).project(&a).unwrap();
            let pb = Projector::new(&grid, &projection_basis(&eff)).project(&b).unwrap();
            let worst = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-7, "k {k}: projection differs by {worst}");
        }
    }
}
