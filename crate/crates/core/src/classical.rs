//! Classical Dicke Hamiltonian on the four-dimensional phase space
//! `x = (q, p; Q, P)`, energy-shell geometry and shell sampling.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::StreamFactory;
use crate::stats::{batch_bounds, batched_sums, BatchEstimate, MonteCarloConfig};

/// Weights with `|∂h/∂q|` below this are dropped.
pub const ROOT_CLAMP: f64 = 1e-8;

const BLOCH_TOL: f64 = 1e-12;

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
    pub Q: f64,
    pub P: f64,
}

impl PhasePoint {
    #[allow(non_snake_case)]
    pub fn new(q: f64, p: f64, Q: f64, P: f64) -> Self {
        Self { q, p, Q, P }
    }

    /// Z² = Q² + P².
    pub fn z2(&self) -> f64 {
        self.Q * self.Q + self.P * self.P
    }

    pub fn check_bloch(&self) -> Result<()> {
        let z2 = self.z2();
        if !(z2 <= 4.0 + BLOCH_TOL) {
            return Err(Error::BlochConstraint(z2));
        }
        Ok(())
    }
}

/// `b(Q, P) = 2γ Q √(1 − Z²/4)`, the coefficient of `q` in `h_cl`.
#[inline]
#[allow(non_snake_case)]
pub fn q_coupling(Q: f64, P: f64, params: &ModelParams) -> f64 {
    let z2 = Q * Q + P * P;
    2.0 * params.gamma * Q * (1.0 - z2 / 4.0).max(0.0).sqrt()
}

#[inline]
pub(crate) fn h_cl_unchecked(x: &PhasePoint, params: &ModelParams) -> f64 {
    let z2 = x.z2();
    0.5 * params.omega * (x.q * x.q + x.p * x.p) + 0.5 * params.omega0 * z2 + x.q * q_coupling(x.Q, x.P, params)
        - params.omega0
}

/// Scaled classical energy ε = h_cl(x).
pub fn h_cl(x: &PhasePoint, params: &ModelParams) -> Result<f64> {
    x.check_bloch()?;
    Ok(h_cl_unchecked(x, params))
}

/// Global minimum of `h_cl` and a minimizer.
///
/// At `p = P = 0` the optimal `q` is `−b/ω`, which leaves a quadratic in
/// `u = Q²` with minimum at `u* = 2 − ωω₀/(2γ²)` above the critical
/// coupling. The analytic point is then polished by golden-section search.
pub fn ground_state_energy(params: &ModelParams) -> (f64, PhasePoint) {
    if params.gamma <= params.gamma_c() {
        return (-params.omega0, PhasePoint::default());
    }
    let reduced = |big_q: f64| {
        let b = q_coupling(big_q, 0.0, params);
        0.5 * params.omega0 * big_q * big_q - b * b / (2.0 * params.omega) - params.omega0
    };
    let u = 2.0 - params.omega * params.omega0 / (2.0 * params.gamma * params.gamma);
    let guess = u.sqrt();
    let (mut lo, mut hi) = ((guess - 1e-3).max(0.0), (guess + 1e-3).min(2.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if reduced(a) <= reduced(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mid = 0.5 * (lo + hi);
    let big_q = if reduced(mid) <= reduced(guess) { mid } else { guess };
    let q = -q_coupling(big_q, 0.0, params) / params.omega;
    let x = PhasePoint::new(q, 0.0, big_q, 0.0);
    (h_cl_unchecked(&x, params), x)
}

/// Squared half-width in `p` of the shell slice at fixed `(Q, P)`.
///
/// The shell at fixed `(Q, P)` is the circle
/// `(q + b/ω)² + p² = p_max²` in the bosonic plane.
#[allow(non_snake_case)]
pub fn p_max_squared(Q: f64, P: f64, epsilon: f64, params: &ModelParams) -> f64 {
    let z2 = Q * Q + P * P;
    let b = q_coupling(Q, P, params);
    (2.0 / params.omega) * (epsilon + params.omega0 - 0.5 * params.omega0 * z2) + b * b / (params.omega * params.omega)
}

/// A root of `h_cl = ε` in `q` with its jacobian weight `1/|∂h/∂q|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QRoot {
    pub q: f64,
    pub weight: f64,
}

/// Solves `(ω/2)q² + b q + c − ε = 0` for `q`. Double roots and roots with
/// `|∂h/∂q| < clamp` are discarded.
#[allow(non_snake_case)]
pub fn shell_roots_q_clamped(p: f64, Q: f64, P: f64, epsilon: f64, params: &ModelParams, clamp: f64) -> Vec<QRoot> {
    let z2 = Q * Q + P * P;
    if z2 > 4.0 + BLOCH_TOL {
        return Vec::new();
    }
    let w = params.omega;
    let b = q_coupling(Q, P, params);
    let c = 0.5 * w * p * p + 0.5 * params.omega0 * z2 - params.omega0;
    let disc = b * b - 2.0 * w * (c - epsilon);
    if disc <= 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    if s < clamp {
        return Vec::new();
    }
    // Both roots have |∂h/∂q| = |ωq + b| = √disc.
    let (q1, q2) = if b >= 0.0 {
        let t = -b - s;
        (t / w, 2.0 * (c - epsilon) / t)
    } else {
        let t = -b + s;
        (2.0 * (c - epsilon) / t, t / w)
    };
    let mut roots = vec![QRoot { q: q1, weight: 1.0 / s }, QRoot { q: q2, weight: 1.0 / s }];
    roots.sort_by(|a, b| a.q.total_cmp(&b.q));
    roots
}

#[allow(non_snake_case)]
pub fn shell_roots_q(p: f64, Q: f64, P: f64, epsilon: f64, params: &ModelParams) -> Vec<QRoot> {
    shell_roots_q_clamped(p, Q, P, epsilon, params, ROOT_CLAMP)
}

/// Root of `h_cl(q, p; Q, P) = ε` closest to `q_ref`.
#[allow(non_snake_case)]
pub fn nearest_root(q_ref: f64, p: f64, Q: f64, P: f64, epsilon: f64, params: &ModelParams) -> Result<f64> {
    shell_roots_q_clamped(p, Q, P, epsilon, params, 0.0)
        .into_iter()
        .min_by(|a, b| (a.q - q_ref).abs().total_cmp(&(b.q - q_ref).abs()))
        .map(|r| r.q)
        .ok_or_else(|| Error::ShellEdge(format!("p = {p}, Q = {Q}, P = {P}, epsilon = {epsilon}")))
}

#[inline]
pub(crate) fn uniform_disk<R: Rng>(rng: &mut R) -> (f64, f64) {
    let r = 2.0 * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    (r * phi.cos(), r * phi.sin())
}

fn check_above_ground(epsilon: f64, params: &ModelParams) -> Result<f64> {
    let (ground, _) = ground_state_energy(params);
    if !(epsilon > ground) {
        return Err(Error::ZeroVolume { epsilon, ground });
    }
    Ok(ground)
}

/// Semiclassical density of states ν(ε) = V(M_ε)/4π² with its standard error.
///
/// `(Q, P)` is uniform on the Bloch disk and `p` follows the arcsine density
/// on `[−p_max, p_max]`, which cancels the `1/|∂h/∂q|` singularity at the
/// turning points.
pub fn density_of_states(epsilon: f64, params: &ModelParams, mc: &MonteCarloConfig) -> Result<(f64, f64)> {
    check_above_ground(epsilon, params)?;
    let streams = StreamFactory::new(mc.seed, "density_of_states");
    let sums = batched_sums::<1, _>(mc.n_samples, mc.n_batches, |i| {
        let mut rng = streams.stream(i as u64);
        let (big_q, big_p) = uniform_disk(&mut rng);
        let pm2 = p_max_squared(big_q, big_p, epsilon, params);
        if pm2 <= 0.0 {
            return [0.0];
        }
        let pm = pm2.sqrt();
        let theta = PI * (rng.random::<f64>() - 0.5);
        let p = pm * theta.sin();
        let root_sum: f64 = shell_roots_q(p, big_q, big_p, epsilon, params).iter().map(|r| r.weight).sum();
        // Inverse arcsine density π√(p_max² − p²).
        [root_sum * PI * pm * theta.cos()]
    });
    let est = BatchEstimate::from_sums(mc.n_samples, &sums);
    let scale = 4.0 * PI / (4.0 * PI * PI);
    Ok((est.mean[0] * scale, est.stderr(0) * scale))
}

/// Bounding box for `{h_cl ≤ ε}`: half-widths in `p` and `q`.
fn volume_box(epsilon: f64, params: &ModelParams) -> (f64, f64) {
    let w = params.omega;
    let b_max = 2.0 * params.gamma;
    let r = ((2.0 / w) * (epsilon + params.omega0) + b_max * b_max / (w * w)).max(0.0).sqrt();
    (r, r + b_max / w)
}

/// Φ(ε) = Vol{x : h_cl(x) ≤ ε} by rejection sampling in a box around the
/// region, with its standard error.
pub fn phase_space_volume_below(epsilon: f64, params: &ModelParams, mc: &MonteCarloConfig) -> Result<(f64, f64)> {
    let ground = check_above_ground(epsilon, params).or_else(|e| match e {
        Error::ZeroVolume { epsilon, ground } if epsilon == ground => Ok(ground),
        other => Err(other),
    })?;
    if epsilon == ground {
        return Ok((0.0, 0.0));
    }
    let (pw, qw) = volume_box(epsilon, params);
    let box_volume = 4.0 * PI * (2.0 * pw) * (2.0 * qw);
    let streams = StreamFactory::new(mc.seed, "phase_space_volume");
    let sums = batched_sums::<1, _>(mc.n_samples, mc.n_batches, |i| {
        let x = box_draw(&streams, i, pw, qw);
        [(h_cl_unchecked(&x, params) <= epsilon) as u8 as f64]
    });
    let est = BatchEstimate::from_sums(mc.n_samples, &sums);
    Ok((est.mean[0] * box_volume, est.stderr(0) * box_volume))
}

fn box_draw(streams: &StreamFactory, i: usize, pw: f64, qw: f64) -> PhasePoint {
    let mut rng = streams.stream(i as u64);
    let (big_q, big_p) = uniform_disk(&mut rng);
    let p = pw * (2.0 * rng.random::<f64>() - 1.0);
    let q = qw * (2.0 * rng.random::<f64>() - 1.0);
    PhasePoint::new(q, p, big_q, big_p)
}

/// Finite-difference estimate `[Φ(ε+δ) − Φ(ε−δ)] / (2δ·4π²)` with common
/// random numbers, returned with its standard error.
pub fn density_from_volume(epsilon: f64, delta: f64, params: &ModelParams, mc: &MonteCarloConfig) -> Result<(f64, f64)> {
    check_above_ground(epsilon - delta, params)?;
    let (pw, qw) = volume_box(epsilon + delta, params);
    let box_volume = 4.0 * PI * (2.0 * pw) * (2.0 * qw);
    let streams = StreamFactory::new(mc.seed, "phase_space_volume");
    let sums = batched_sums::<1, _>(mc.n_samples, mc.n_batches, |i| {
        let h = h_cl_unchecked(&box_draw(&streams, i, pw, qw), params);
        [(h > epsilon - delta && h <= epsilon + delta) as u8 as f64]
    });
    let est = BatchEstimate::from_sums(mc.n_samples, &sums);
    let scale = box_volume / (2.0 * delta * 4.0 * PI * PI);
    Ok((est.mean[0] * scale, est.stderr(0) * scale))
}

/// Weighted sample of the energy shell `h_cl = ε`.
///
/// The weighted empirical measure `Σ wᵢ δ(x − xᵢ) · box_volume / n_draws`
/// estimates `δ(h_cl − ε) dx`. Points are ordered by the draw that produced
/// them so that batch statistics can be formed over draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShellSample {
    pub epsilon: f64,
    pub seed: u64,
    pub n_draws: usize,
    /// Area of the `(Q, P)` region the draws cover.
    pub box_volume: f64,
    pub points: Vec<PhasePoint>,
    pub weights: Vec<f64>,
    pub draws: Vec<u32>,
}

/// JSON metadata accompanying a shell-sample CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShellSampleMeta {
    pub epsilon: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub n_points: usize,
    pub box_volume: f64,
    pub box_description: String,
}

impl ShellSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-batch sums of `f(point index)` times the point weight; batches
    /// partition the draws.
    pub fn batch_sums<const K: usize, F>(&self, n_batches: usize, f: F) -> Vec<[f64; K]>
    where
        F: Fn(usize) -> [f64; K] + Sync,
    {
        let nb = n_batches.max(1);
        (0..nb)
            .into_par_iter()
            .map(|b| {
                let (lo, hi) = batch_bounds(self.n_draws, nb, b);
                let start = self.draws.partition_point(|&d| (d as usize) < lo);
                let end = self.draws.partition_point(|&d| (d as usize) < hi);
                let mut acc = [0.0; K];
                for i in start..end {
                    let v = f(i);
                    for k in 0..K {
                        acc[k] += self.weights[i] * v[k];
                    }
                }
                acc
            })
            .collect()
    }

    /// Shell integrals `∫ ds f_k` with batch-mean errors.
    pub fn integrate<const K: usize>(&self, values: &[[f64; K]], n_batches: usize) -> BatchEstimate<K> {
        let sums = self.batch_sums(n_batches, |i| values[i]);
        let mut est = BatchEstimate::from_sums(self.n_draws, &sums);
        let s = self.box_volume;
        for a in 0..K {
            est.mean[a] *= s;
            for c in 0..K {
                est.cov[a][c] *= s * s;
            }
        }
        est
    }

    /// Shell volume V(M_ε) = 4π²ν(ε) with its standard error.
    pub fn volume(&self, n_batches: usize) -> (f64, f64) {
        let ones = vec![[1.0]; self.len()];
        let est = self.integrate(&ones, n_batches);
        (est.mean[0], est.stderr(0))
    }

    pub fn metadata(&self) -> ShellSampleMeta {
        ShellSampleMeta {
            epsilon: self.epsilon,
            seed: self.seed,
            n_samples: self.n_draws,
            n_points: self.len(),
            box_volume: self.box_volume,
            box_description: "(Q,P) uniform on the Bloch disk; p arcsine on the shell slice; q from both roots".into(),
        }
    }

    /// Writes `q,p,Q,P,weight` rows to `csv_path` and metadata to `json_path`.
    pub fn export(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["q", "p", "Q", "P", "weight"])?;
        for (x, wt) in self.points.iter().zip(&self.weights) {
            w.write_record(&[x.q, x.p, x.Q, x.P, *wt].map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        let mut f = std::fs::File::create(json_path)?;
        serde_json::to_writer_pretty(&mut f, &self.metadata())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Draws `n_samples` points `(Q, P, p)` and expands each into its two
/// `q`-roots on the shell.
///
/// With `p = p_max sin θ` and `θ` uniform, the jacobian `1/|∂h/∂q|` times
/// the inverse proposal density is the constant `π/ω` for every root.
pub fn sample_shell(epsilon: f64, n_samples: usize, seed: u64, params: &ModelParams) -> Result<ShellSample> {
    sample_shell_clamped(epsilon, n_samples, seed, params, ROOT_CLAMP)
}

pub fn sample_shell_clamped(
    epsilon: f64,
    n_samples: usize,
    seed: u64,
    params: &ModelParams,
    clamp: f64,
) -> Result<ShellSample> {
    check_above_ground(epsilon, params)?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let streams = StreamFactory::new(seed, "sample_shell");
    let w = params.omega;
    let weight = PI / w;
    let per_draw: Vec<Option<[PhasePoint; 2]>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(i as u64);
            let (big_q, big_p) = uniform_disk(&mut rng);
            let pm2 = p_max_squared(big_q, big_p, epsilon, params);
            if pm2 <= 0.0 {
                return None;
            }
            let pm = pm2.sqrt();
            let theta = PI * (rng.random::<f64>() - 0.5);
            let (s, c) = theta.sin_cos();
            if w * pm * c < clamp {
                return None;
            }
            let centre = -q_coupling(big_q, big_p, params) / w;
            let p = pm * s;
            Some([
                PhasePoint::new(centre - pm * c, p, big_q, big_p),
                PhasePoint::new(centre + pm * c, p, big_q, big_p),
            ])
        })
        .collect();
    let mut points = Vec::with_capacity(2 * n_samples);
    let mut draws = Vec::with_capacity(2 * n_samples);
    for (i, pair) in per_draw.into_iter().enumerate() {
        if let Some(pair) = pair {
            points.extend_from_slice(&pair);
            draws.extend_from_slice(&[i as u32, i as u32]);
        }
    }
    let weights = vec![weight; points.len()];
    Ok(ShellSample {
        epsilon,
        seed,
        n_draws: n_samples,
        box_volume: 4.0 * PI,
        points,
        weights,
        draws,
    })
}
