//! Batch-means error estimation and deterministic parallel accumulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Monte Carlo budget shared by the sampling routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub n_samples: usize,
    pub n_batches: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            n_batches: 20,
            seed: 0,
        }
    }
}

impl MonteCarloConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            ..Default::default()
        }
    }
}

/// Sample range `[start, end)` of batch `b` when `n` samples are cut into
/// `n_batches` contiguous batches.
pub fn batch_bounds(n: usize, n_batches: usize, b: usize) -> (usize, usize) {
    (b * n / n_batches, (b + 1) * n / n_batches)
}

const CHUNK: usize = 2048;

/// Per-batch sums of `f(i)` over `i in 0..n`.
///
/// Work is split into fixed chunks inside each batch and partial sums are
/// combined in index order, so the result is bit-identical for any thread
/// count.
pub fn batched_sums<const K: usize, F>(n: usize, n_batches: usize, f: F) -> Vec<[f64; K]>
where
    F: Fn(usize) -> [f64; K] + Sync,
{
    let n_batches = n_batches.max(1);
    (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = batch_bounds(n, n_batches, b);
            let parts: Vec<[f64; K]> = (lo..hi)
                .step_by(CHUNK)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|start| {
                    let mut acc = [0.0; K];
                    for i in start..(start + CHUNK).min(hi) {
                        let v = f(i);
                        for k in 0..K {
                            acc[k] += v[k];
                        }
                    }
                    acc
                })
                .collect();
            let mut acc = [0.0; K];
            for p in parts {
                for k in 0..K {
                    acc[k] += p[k];
                }
            }
            acc
        })
        .collect()
}

/// Grand means of `K` estimators and the covariance of those means,
/// estimated from the spread of batch means.
#[derive(Debug, Clone)]
pub struct BatchEstimate<const K: usize> {
    pub mean: [f64; K],
    pub cov: [[f64; K]; K],
}

impl<const K: usize> BatchEstimate<K> {
    pub fn from_sums(n: usize, sums: &[[f64; K]]) -> Self {
        let nb = sums.len();
        let mut mean = [0.0; K];
        for s in sums {
            for k in 0..K {
                mean[k] += s[k];
            }
        }
        for m in mean.iter_mut() {
            *m /= n.max(1) as f64;
        }
        let mut cov = [[0.0; K]; K];
        if nb > 1 {
            let batch_means: Vec<[f64; K]> = (0..nb)
                .map(|b| {
                    let (lo, hi) = batch_bounds(n, nb, b);
                    let c = (hi - lo).max(1) as f64;
                    let mut m = [0.0; K];
                    for k in 0..K {
                        m[k] = sums[b][k] / c;
                    }
                    m
                })
                .collect();
            for bm in &batch_means {
                for a in 0..K {
                    for c in 0..K {
                        cov[a][c] += (bm[a] - mean[a]) * (bm[c] - mean[c]);
                    }
                }
            }
            let denom = (nb * (nb - 1)) as f64;
            for row in cov.iter_mut() {
                for x in row.iter_mut() {
                    *x /= denom;
                }
            }
        }
        Self { mean, cov }
    }

    pub fn stderr(&self, k: usize) -> f64 {
        self.cov[k][k].max(0.0).sqrt()
    }

    /// Standard error of `g(mean)` by the delta method, given `∇g`.
    pub fn delta_stderr(&self, grad: [f64; K]) -> f64 {
        let mut v = 0.0;
        for a in 0..K {
            for c in 0..K {
                v += grad[a] * self.cov[a][c] * grad[c];
            }
        }
        v.max(0.0).sqrt()
    }
}

/// Mean and batch-means standard error of a plain sample.
pub fn batch_means(values: &[f64], n_batches: usize) -> (f64, f64) {
    let nb = n_batches.max(1).min(values.len().max(1));
    let sums: Vec<[f64; 1]> = (0..nb)
        .map(|b| {
            let (lo, hi) = batch_bounds(values.len(), nb, b);
            [values[lo..hi].iter().sum()]
        })
        .collect();
    let est = BatchEstimate::from_sums(values.len(), &sums);
    (est.mean[0], est.stderr(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_partition_the_range() {
        let n = 1003;
        let mut covered = 0;
        for b in 0..20 {
            let (lo, hi) = batch_bounds(n, 20, b);
            assert_eq!(lo, covered);
            covered = hi;
        }
        assert_eq!(covered, n);
    }

    #[test]
    fn sums_are_thread_count_independent() {
        let f = |i: usize| [((i as f64) * 0.37).sin(), 1.0];
        let a = batched_sums(100_000, 20, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| batched_sums(100_000, 20, f));
        assert_eq!(a, b);
        let total: f64 = a.iter().map(|s| s[1]).sum();
        assert_eq!(total, 100_000.0);
    }

    #[test]
    fn constant_sample_has_zero_error() {
        let (m, s) = batch_means(&[2.5; 400], 20);
        assert_eq!(m, 2.5);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn delta_method_for_ratio() {
        // g(a, b) = a / b with independent errors.
        let est = BatchEstimate::<2> {
            mean: [2.0, 4.0],
            cov: [[0.01, 0.0], [0.0, 0.04]],
        };
        let g = [1.0 / 4.0, -2.0 / 16.0];
        let expect = (0.01f64 / 16.0 + 0.04 * 4.0 / 256.0).sqrt();
        assert!((est.delta_stderr(g) - expect).abs() < 1e-15);
    }
}
