//! Sparse storage and LAPACK-backed symmetric eigensolvers.

use std::os::raw::{c_char, c_int};

use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real matrix in compressed sparse row form. Both triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn matvec_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| x[c] * v).sum();
        }
    }

    /// Largest |H_ij - H_ji| over all stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense copy in column-major (Fortran) layout, ready for LAPACK.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::<f64>::zeros((self.dim, self.dim).f());
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                a[[i, j]] = v;
            }
        }
        a
    }

    /// Lower bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                let mut d = 0.0;
                let mut off = 0.0;
                for (j, v) in self.row(i) {
                    if j == i {
                        d = v;
                    } else {
                        off += v.abs();
                    }
                }
                d - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Principal submatrix on the given (sorted) index set.
    pub fn submatrix(&self, indices: &[usize]) -> CsrMatrix {
        let mut position = vec![usize::MAX; self.dim];
        for (k, &i) in indices.iter().enumerate() {
            position[i] = k;
        }
        let mut triplets = Vec::new();
        for (k, &i) in indices.iter().enumerate() {
            for (j, v) in self.row(i) {
                if position[j] != usize::MAX {
                    triplets.push((k, position[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(indices.len(), triplets)
    }
}

/// Which part of the spectrum a dense solve should return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenRange {
    All,
    /// The `k` lowest eigenpairs.
    Lowest(usize),
    /// All eigenpairs with eigenvalue `<= upper`.
    Below(f64),
}

extern "C" {
    fn openblas_set_num_threads(n: c_int);
}

static SINGLE_THREADED_BLAS: std::sync::Once = std::sync::Once::new();

/// OpenBLAS results can depend on its thread count; pin it so that
/// spectra are bit-identical on every machine configuration.
fn pin_blas_threads() {
    SINGLE_THREADED_BLAS.call_once(|| unsafe { openblas_set_num_threads(1) });
}

fn ch(b: &'static [u8; 1]) -> *const c_char {
    b.as_ptr() as *const c_char
}

/// Dense symmetric eigendecomposition with LAPACK `dsyevr`.
///
/// `a` must be square and column-major; it is destroyed. Eigenvalues are
/// ascending and eigenvectors are the columns of the returned matrix.
pub fn symmetric_eigen(mut a: Array2<f64>, range: EigenRange) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0).f())));
    }
    pin_blas_threads();
    if !a.t().is_standard_layout() {
        a = {
            let mut f = Array2::<f64>::zeros((n, n).f());
            f.assign(&a);
            f
        };
    }
    let ni = n as c_int;
    let (range_flag, vl, vu, il, iu, max_m) = match range {
        EigenRange::All => (ch(b"A"), 0.0, 0.0, 1, ni, n),
        EigenRange::Lowest(k) => {
            let k = k.clamp(1, n);
            (ch(b"I"), 0.0, 0.0, 1, k as c_int, k)
        }
        EigenRange::Below(upper) => {
            let mut lower = f64::INFINITY;
            for i in 0..n {
                let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[[i, j]].abs()).sum();
                lower = lower.min(a[[i, i]] - off);
            }
            let lower = lower - 1.0;
            if upper <= lower {
                return Ok((Vec::new(), Array2::zeros((n, 0).f())));
            }
            (ch(b"V"), lower, upper, 1, ni, n)
        }
    };
    let abstol = 0.0f64;
    let mut m: c_int = 0;
    let mut w = vec![0.0f64; n];
    let mut z = vec![0.0f64; n * max_m];
    let mut isuppz = vec![0 as c_int; 2 * max_m.max(1)];
    let mut info: c_int = 0;
    let mut work_query = 0.0f64;
    let mut iwork_query: c_int = 0;
    let query: c_int = -1;
    unsafe {
        lapack_sys::dsyevr_(
            ch(b"V"),
            range_flag,
            ch(b"L"),
            &ni,
            a.as_mut_ptr(),
            &ni,
            &vl,
            &vu,
            &il,
            &iu,
            &abstol,
            &mut m,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            isuppz.as_mut_ptr(),
            &mut work_query,
            &query,
            &mut iwork_query,
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(info));
    }
    let lwork = work_query as c_int;
    let liwork = iwork_query;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevr_(
            ch(b"V"),
            range_flag,
            ch(b"L"),
            &ni,
            a.as_mut_ptr(),
            &ni,
            &vl,
            &vu,
            &il,
            &iu,
            &abstol,
            &mut m,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            isuppz.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(info));
    }
    let m = m as usize;
    w.truncate(m);
    z.truncate(n * m);
    let vectors = Array2::from_shape_vec((n, m).f(), z).expect("dsyevr output shape");
    Ok((w, vectors))
}

/// Eigenpairs of a symmetric tridiagonal matrix (LAPACK `dstev`).
pub fn tridiagonal_eigen(diag: &[f64], offdiag: &[f64]) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = diag.len();
    assert_eq!(offdiag.len() + 1, n.max(1));
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);
    let mut z = vec![0.0f64; n * n];
    let mut work = vec![0.0f64; (2 * n).max(1)];
    let ni = n as c_int;
    let mut info: c_int = 0;
    unsafe {
        lapack_sys::dstev_(
            ch(b"V"),
            &ni,
            d.as_mut_ptr(),
            e.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(info));
    }
    Ok((d, Array2::from_shape_vec((n, n).f(), z).expect("dstev shape")))
}

/// Lowest `k` eigenpairs of a sparse symmetric matrix by Lanczos with full
/// reorthogonalization. Intended for a handful of extremal states.
pub fn lanczos_lowest(
    h: &CsrMatrix,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = h.dim();
    let k = k.min(n);
    let max_iter = max_iter.min(n);
    // Deterministic, generic start vector.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_749_895).fract())
        .collect();
    normalize(&mut v);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    for step in 0..max_iter {
        h.matvec(&basis[step], &mut w);
        let alpha = dot(&w, &basis[step]);
        alphas.push(alpha);
        // Full reorthogonalization, applied twice.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = norm(&w);
        let m = step + 1;
        if m >= k && (m % 10 == 0 || beta < 1e-14 || m == max_iter) {
            let (theta, s) = tridiagonal_eigen(&alphas, &betas)?;
            let converged = (0..k).all(|i| (beta * s[[m - 1, i]]).abs() < tol * theta[i].abs().max(1.0));
            if converged || beta < 1e-14 || m == max_iter {
                if !converged && beta >= 1e-14 {
                    return Err(Error::LanczosNotConverged(m));
                }
                let vectors = (0..k)
                    .map(|i| {
                        let mut x = vec![0.0; n];
                        for (row, b) in basis.iter().enumerate() {
                            let c = s[[row, i]];
                            for (xi, bi) in x.iter_mut().zip(b) {
                                *xi += c * bi;
                            }
                        }
                        normalize(&mut x);
                        x
                    })
                    .collect();
                return Ok((theta[..k].to_vec(), vectors));
            }
        }
        betas.push(beta);
        let next: Vec<f64> = w.iter().map(|x| x / beta).collect();
        basis.push(next);
    }
    Err(Error::LanczosNotConverged(max_iter))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let s = norm(a);
    a.iter_mut().for_each(|x| *x /= s);
}
