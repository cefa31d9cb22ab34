use ndarray::{Array2, ArrayView1, ShapeBuilder};
use serde::{Deserialize, Serialize};

use super::{build_efficient_hamiltonian, build_fock_hamiltonian, BasisTag, EfficientBasisSpec, FockBasisSpec, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, CsrMatrix, EigenRange};

/// Eigenpairs of a truncated Dicke Hamiltonian. Immutable once built.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub params: ModelParams,
    pub basis: BasisTag,
    /// Absolute energies `E_k`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `E_k` (column-major storage).
    pub eigenvectors: Array2<f64>,
    pub converged: Vec<bool>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// ε_k = E_k / j.
    pub fn scaled_energies(&self) -> Vec<f64> {
        let j = self.params.j();
        self.eigenvalues.iter().map(|e| e / j).collect()
    }

    pub fn scaled_energy(&self, k: usize) -> f64 {
        self.eigenvalues[k] / self.params.j()
    }

    pub fn eigenvector(&self, k: usize) -> ArrayView1<'_, f64> {
        self.eigenvectors.column(k)
    }

    pub fn converged_count(&self) -> usize {
        self.converged.iter().filter(|&&c| c).count()
    }

    /// Fock basis of the eigenvectors, or an error for efficient-basis spectra.
    pub fn fock_basis(&self) -> Result<FockBasisSpec> {
        match self.basis {
            BasisTag::Fock { n_max } => Ok(FockBasisSpec {
                two_j: self.params.two_j(),
                n_max,
            }),
            BasisTag::Efficient { .. } => Err(Error::BasisMismatch(
                "eigenvectors are in the efficient basis; a Fock-basis spectrum is required".into(),
            )),
        }
    }

    /// Largest deviation of `VᵀV` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let v = &self.eigenvectors;
        let g = v.t().dot(v);
        let mut worst = 0.0f64;
        for ((i, k), x) in g.indexed_iter() {
            let target = if i == k { 1.0 } else { 0.0 };
            worst = worst.max((x - target).abs());
        }
        worst
    }
}

/// How to solve a model Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    #[serde(skip, default = "default_range")]
    pub range: EigenRange,
    /// Diagonalize the two parity blocks separately (Fock basis only).
    pub use_parity: bool,
    pub guard_fraction: f64,
    pub threshold: f64,
}

fn default_range() -> EigenRange {
    EigenRange::All
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            range: EigenRange::All,
            use_parity: false,
            guard_fraction: 0.1,
            threshold: 1e-8,
        }
    }
}

/// Eigendecomposition of a sparse symmetric matrix.
pub fn diagonalize(h: &CsrMatrix, range: EigenRange) -> Result<(Vec<f64>, Array2<f64>)> {
    let asym = h.max_asymmetry();
    if asym > 0.0 {
        return Err(Error::NotSymmetric(asym));
    }
    symmetric_eigen(h.to_dense(), range)
}

fn diagonalize_by_parity(h: &CsrMatrix, basis: &FockBasisSpec, range: EigenRange) -> Result<(Vec<f64>, Array2<f64>)> {
    let asym = h.max_asymmetry();
    if asym > 0.0 {
        return Err(Error::NotSymmetric(asym));
    }
    let dim = h.dim();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
    for sign in [1i8, -1] {
        let idx: Vec<usize> = (0..dim).filter(|&i| basis.parity(i) == sign).collect();
        if idx.is_empty() {
            continue;
        }
        let block_range = match range {
            EigenRange::Lowest(k) => EigenRange::Lowest(k.min(idx.len())),
            other => other,
        };
        let (vals, vecs) = symmetric_eigen(h.submatrix(&idx).to_dense(), block_range)?;
        for (c, &e) in vals.iter().enumerate() {
            let mut full = vec![0.0; dim];
            for (r, &i) in idx.iter().enumerate() {
                full[i] = vecs[[r, c]];
            }
            pairs.push((e, full));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let EigenRange::Lowest(k) = range {
        pairs.truncate(k);
    }
    let m = pairs.len();
    let mut vecs = Array2::<f64>::zeros((dim, m).f());
    let mut vals = Vec::with_capacity(m);
    for (c, (e, v)) in pairs.into_iter().enumerate() {
        vals.push(e);
        vecs.column_mut(c).assign(&ArrayView1::from(&v));
    }
    Ok((vals, vecs))
}

/// Builds the Hamiltonian in the requested basis, diagonalizes it and flags
/// converged eigenstates.
pub fn solve(params: &ModelParams, basis: BasisTag, opts: &SolveOptions) -> Result<Spectrum> {
    let (eigenvalues, eigenvectors) = match basis {
        BasisTag::Fock { n_max } => {
            let spec = FockBasisSpec::new(params, n_max);
            let h = build_fock_hamiltonian(params, &spec)?;
            if opts.use_parity {
                diagonalize_by_parity(&h, &spec, opts.range)?
            } else {
                diagonalize(&h, opts.range)?
            }
        }
        BasisTag::Efficient { n_max } => {
            if opts.use_parity {
                return Err(Error::InvalidArgument(
                    "parity blocks are only implemented for the Fock basis".into(),
                ));
            }
            let h = build_efficient_hamiltonian(params, &EfficientBasisSpec::new(params, n_max))?;
            diagonalize(&h, opts.range)?
        }
    };
    let mut spectrum = Spectrum {
        params: *params,
        basis,
        eigenvalues,
        eigenvectors,
        converged: Vec::new(),
    };
    spectrum.converged = convergence_filter(&spectrum, opts.guard_fraction, opts.threshold);
    Ok(spectrum)
}

/// Flags eigenvectors whose weight on the top `guard_fraction` of bosonic
/// levels is below `threshold`. The highest level always belongs to the
/// guard band, so a single-level truncation never counts as converged.
pub fn convergence_filter(spec: &Spectrum, guard_fraction: f64, threshold: f64) -> Vec<bool> {
    let n_max = spec.basis.n_max();
    let na = spec.params.atomic_dim();
    let cut = n_max as f64 * (1.0 - guard_fraction);
    let first_guard = (0..=n_max).find(|&n| n as f64 > cut).unwrap_or(n_max);
    let start = first_guard * na;
    (0..spec.len())
        .map(|k| {
            let col = spec.eigenvector(k);
            let tail: f64 = col.iter().skip(start).map(|x| x * x).sum();
            tail < threshold
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64, j: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, gamma, j).unwrap()
    }

    #[test]
    fn identity_and_permutation() {
        let id = CsrMatrix::from_triplets(5, (0..5).map(|i| (i, i, 1.0)).collect());
        let (vals, _) = diagonalize(&id, EigenRange::All).unwrap();
        assert!(vals.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let d = CsrMatrix::from_triplets(3, vec![(0, 0, 3.0), (1, 1, 1.0), (2, 2, 2.0)]);
        let (vals, vecs) = diagonalize(&d, EigenRange::All).unwrap();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        for (c, row) in [1usize, 2, 0].iter().enumerate() {
            assert!((vecs[[*row, c]].abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 1.5)]);
        assert!(matches!(diagonalize(&m, EigenRange::All), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn parity_blocks_reproduce_full_solve() {
        let p = params(1.0, 1.5);
        let basis = BasisTag::Fock { n_max: 30 };
        let full = solve(&p, basis, &SolveOptions::default()).unwrap();
        let opts = SolveOptions {
            use_parity: true,
            ..Default::default()
        };
        let split = solve(&p, basis, &opts).unwrap();
        for (a, b) in full.eigenvalues.iter().zip(&split.eigenvalues) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(split.orthonormality_error() < 1e-10);
        let lowest = solve(
            &p,
            basis,
            &SolveOptions {
                range: EigenRange::Lowest(7),
                use_parity: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(lowest.len(), 7);
        for k in 0..7 {
            assert!((lowest.eigenvalues[k] - full.eigenvalues[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_coupling_converged_states_sit_below_guard() {
        let p = params(0.0, 1.0);
        let spec = solve(&p, BasisTag::Fock { n_max: 20 }, &SolveOptions::default()).unwrap();
        let fock = spec.fock_basis().unwrap();
        for k in 0..spec.len() {
            let col = spec.eigenvector(k);
            let (argmax, _) = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            let (n, _) = fock.split(argmax);
            assert_eq!(spec.converged[k], n as f64 <= 20.0 * 0.9, "k = {k}, n = {n}");
        }
    }

    #[test]
    fn single_level_truncation_is_unconverged() {
        let p = params(1.0, 1.0);
        let spec = solve(&p, BasisTag::Fock { n_max: 0 }, &SolveOptions::default()).unwrap();
        assert_eq!(spec.converged_count(), 0);
    }

    #[test]
    fn converged_count_grows_with_truncation() {
        let p = params(1.0, 2.0);
        let mut last = 0;
        for n_max in [20, 40, 80] {
            let spec = solve(&p, BasisTag::Fock { n_max }, &SolveOptions::default()).unwrap();
            assert!(spec.converged_count() >= last);
            last = spec.converged_count();
        }
        assert!(last > 0);
    }

    #[test]
    fn ground_state_is_variationally_monotone() {
        let p = params(1.0, 2.0);
        let mut prev = f64::INFINITY;
        for n_max in [5, 10, 20, 40] {
            let f = solve(&p, BasisTag::Fock { n_max }, &SolveOptions::default()).unwrap();
            assert!(f.eigenvalues[0] <= prev + 1e-12);
            prev = f.eigenvalues[0];
        }
        let mut prev = f64::INFINITY;
        for n_max in [2, 5, 10, 20] {
            let e = solve(&p, BasisTag::Efficient { n_max }, &SolveOptions::default()).unwrap();
            assert!(e.eigenvalues[0] <= prev + 1e-12);
            prev = e.eigenvalues[0];
        }
    }

    #[test]
    fn efficient_basis_agrees_with_fock_at_spin_two() {
        let p = params(1.0, 2.0);
        let f = solve(&p, BasisTag::Fock { n_max: 80 }, &SolveOptions::default()).unwrap();
        let e = solve(&p, BasisTag::Efficient { n_max: 40 }, &SolveOptions::default()).unwrap();
        for k in 0..20 {
            assert!(
                (f.eigenvalues[k] - e.eigenvalues[k]).abs() < 1e-8,
                "k = {k}: {} vs {}",
                f.eigenvalues[k],
                e.eigenvalues[k]
            );
        }
    }

    #[test]
    fn efficient_spectrum_needs_fock_for_husimi() {
        let p = params(1.0, 1.0);
        let e = solve(&p, BasisTag::Efficient { n_max: 4 }, &SolveOptions::default()).unwrap();
        assert!(matches!(e.fock_basis(), Err(Error::BasisMismatch(_))));
    }
}
