//! Experiment configuration: a TOML file with one optional table per
//! experiment, overridden by command-line flags.
//!
//! ```toml
//! seed = 7
//! out_dir = "out"
//! alphas = [2.0]
//!
//! [params]
//! omega = 1.0
//! omega0 = 1.0
//! gamma = 1.0
//! j = 10.0
//!
//! [basis]
//! kind = "fock"
//! n_max = 300
//!
//! [evolve]
//! times = [0.0, 1.0, 10.0, 100.0]
//! ```

use std::path::{Path, PathBuf};

use dicke_core::model::{ModelParams, SolveOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Largest `j` run without `--full-scale`.
pub const DESK_MAX_J: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Diag,
    Profile,
    Eigstats,
    Evolve,
    Separate,
    Saturate,
    Dos,
    Bound,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Diag => "diag",
            Experiment::Profile => "profile",
            Experiment::Eigstats => "eigstats",
            Experiment::Evolve => "evolve",
            Experiment::Separate => "separate",
            Experiment::Saturate => "saturate",
            Experiment::Dos => "dos",
            Experiment::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Fock,
    Efficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisKind,
    /// Bosonic cutoff; when absent it is chosen by a convergence scan.
    pub n_max: Option<usize>,
    pub use_parity: bool,
    pub guard_fraction: f64,
    pub threshold: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        let s = SolveOptions::default();
        Self {
            kind: BasisKind::Fock,
            n_max: None,
            use_parity: true,
            guard_fraction: s.guard_fraction,
            threshold: s.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    /// `(Q, P, p)` draws per energy shell; each gives two shell points.
    pub shell_draws: usize,
    /// Draws for shells on which only coherent states are evaluated; their
    /// Husimi functions are closed-form, so the budget can be larger.
    pub coherent_shell_draws: usize,
    pub n_batches: usize,
    /// Samples for phase-space volumes and densities of states.
    pub volume_samples: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            shell_draws: 10_000,
            coherent_shell_draws: 400_000,
            n_batches: 20,
            volume_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { resolution: 8 }
    }
}

/// A phase-space point given either in full or by its energy, with `q` on
/// the upper root of the shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Explicit { point: [f64; 4] },
    OnShell { epsilon: f64, p: f64, big_q: f64, big_p: f64 },
}

impl Default for PointSpec {
    fn default() -> Self {
        PointSpec::OnShell {
            epsilon: 1.0,
            p: 0.0,
            big_q: -0.4,
            big_p: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigstatsConfig {
    /// Inclusive eigenstate index window; takes precedence over the energy
    /// window.
    pub k_window: Option<[usize; 2]>,
    pub epsilon_window: [f64; 2],
    pub bins: usize,
}

impl Default for EigstatsConfig {
    fn default() -> Self {
        Self {
            k_window: None,
            epsilon_window: [1.0, 1.274],
            bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub initial: PointSpec,
    pub times: Vec<f64>,
    pub averaging_times: Vec<f64>,
    /// Eigenbasis weight that may be dropped to shorten the expansion.
    pub discard: f64,
    /// Times at which atomic projections are written as heatmaps.
    pub heatmap_times: Vec<f64>,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp();
            (x * 1e4).round() / 1e4
        })
        .collect()
}

impl Default for EvolveConfig {
    fn default() -> Self {
        let mut times = vec![0.0];
        times.extend(log_grid(0.1, 500.0, 24));
        Self {
            initial: PointSpec::default(),
            times,
            averaging_times: log_grid(0.5, 1000.0, 8),
            discard: 1e-8,
            heatmap_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    Atomic,
    Bosonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparateConfig {
    pub mode: ModeConfig,
    pub reference: PointSpec,
    pub d_grid: Vec<f64>,
    pub direction: f64,
    /// Also report the energy width of each mixture (needs a Fock basis).
    pub sigma: bool,
}

impl Default for SeparateConfig {
    /// The reference sits at `p = −0.8` and moves towards `+p`: at the
    /// largest `D` the partner is its mirror image under `p → −p`, which has
    /// the same shell geometry.
    fn default() -> Self {
        Self {
            mode: ModeConfig::Bosonic,
            reference: PointSpec::OnShell {
                epsilon: 1.0,
                p: -0.8,
                big_q: -0.4,
                big_p: 0.0,
            },
            d_grid: (0..=16).map(|i| i as f64 * 0.1).collect(),
            direction: 1.0,
            sigma: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturateConfig {
    pub epsilon: f64,
    pub n_grid: Vec<usize>,
    /// Mixture size at which the lattice covers the whole disk; `4j` when
    /// absent.
    pub n_full: Option<usize>,
}

impl Default for SaturateConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            n_grid: vec![1, 2, 4, 8, 16, 32, 64, 128, 256],
            n_full: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub eigenstates: Vec<usize>,
    pub coherent: Vec<PointSpec>,
    pub epsilon_grid: Vec<f64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            eigenstates: Vec::new(),
            coherent: vec![PointSpec::default()],
            epsilon_grid: (0..=24).map(|i| -1.0 + 0.125 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DosConfig {
    pub epsilons: Vec<f64>,
    pub delta: f64,
    /// Samples for the finite-difference volume oracle.
    pub fd_samples: usize,
}

impl Default for DosConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![-1.5, -0.5, 1.0],
            delta: 0.01,
            fd_samples: 200_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub n_states: usize,
    /// Bosonic cutoff of the random states.
    pub n_max: usize,
    pub samples: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            n_states: 100,
            n_max: 8,
            samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub params: ModelParams,
    pub basis: BasisConfig,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub full_scale: bool,
    pub out_dir: PathBuf,
    pub save_spectrum: Option<PathBuf>,
    pub load_spectrum: Option<PathBuf>,
    pub mc: McConfig,
    pub grid: GridConfig,
    pub eigstats: EigstatsConfig,
    pub evolve: EvolveConfig,
    pub separate: SeparateConfig,
    pub saturate: SaturateConfig,
    pub profile: ProfileConfig,
    pub dos: DosConfig,
    pub bound: BoundConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            params: ModelParams::resonant(10.0).expect("resonant parameters are valid"),
            basis: BasisConfig::default(),
            seed: 0,
            alphas: vec![2.0],
            full_scale: false,
            out_dir: PathBuf::from("out"),
            save_spectrum: None,
            load_spectrum: None,
            mc: McConfig::default(),
            grid: GridConfig::default(),
            eigstats: EigstatsConfig::default(),
            evolve: EvolveConfig::default(),
            separate: SeparateConfig::default(),
            saturate: SaturateConfig::default(),
            profile: ProfileConfig::default(),
            dos: DosConfig::default(),
            bound: BoundConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub alphas: Option<Vec<f64>>,
    pub j: Option<f64>,
    pub full_scale: bool,
    pub save_spectrum: Option<PathBuf>,
    pub load_spectrum: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Full-scale (j = 30) settings used by `--full-scale` when the file does not
    /// say otherwise.
    pub fn full_scale() -> Self {
        let mut cfg = Self {
            params: ModelParams::resonant(30.0).expect("resonant parameters are valid"),
            full_scale: true,
            ..Self::default()
        };
        cfg.basis.kind = BasisKind::Efficient;
        cfg.eigstats.k_window = Some([3121, 3621]);
        cfg.evolve.initial = PointSpec::Explicit {
            point: [2.894, 0.0, -0.4, 0.0],
        };
        cfg.saturate.n_grid = vec![1, 2, 4, 8, 16, 32, 64, 120, 240, 480];
        cfg
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(a) = &o.alphas {
            self.alphas = a.clone();
        }
        if let Some(j) = o.j {
            let p = self.params;
            self.params = ModelParams::new(p.omega, p.omega0, p.gamma, j).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        self.full_scale |= o.full_scale;
        if o.save_spectrum.is_some() {
            self.save_spectrum = o.save_spectrum.clone();
        }
        if o.load_spectrum.is_some() {
            self.load_spectrum = o.load_spectrum.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.j() > DESK_MAX_J && !self.full_scale {
            return Err(HarnessError::Config(format!(
                "j = {} is above desk scale ({DESK_MAX_J}); pass --full-scale to run it",
                self.params.j()
            )));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(HarnessError::Config(format!("alphas must be positive, got {:?}", self.alphas)));
        }
        if self.mc.n_batches < 2 || self.mc.shell_draws.min(self.mc.coherent_shell_draws) < self.mc.n_batches {
            return Err(HarnessError::Config("need at least two batches and one shell draw per batch".into()));
        }
        if let Some([a, b]) = self.eigstats.k_window {
            if a > b {
                return Err(HarnessError::Config(format!("empty k window [{a}, {b}] is reversed")));
            }
        }
        if self.saturate.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.saturate.n_grid.contains(&0) {
            return Err(HarnessError::Config("saturation n grid must be positive and ascending".into()));
        }
        if self.separate.d_grid.iter().any(|d| !(*d >= 0.0)) {
            return Err(HarnessError::Config("separations must be non-negative".into()));
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            use_parity: self.basis.use_parity && self.basis.kind == BasisKind::Fock,
            guard_fraction: self.basis.guard_fraction,
            threshold: self.basis.threshold,
            ..SolveOptions::default()
        }
    }

    /// SHA-256 of the settings that determine results; output and spectrum
    /// paths are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.save_spectrum = None;
        c.load_spectrum = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.params.j(), 10.0);
    }

    #[test]
    fn parses_sections_and_points() {
        let c = ExperimentConfig::from_toml(
            r#"
            experiment = "evolve"
            seed = 3
            [params]
            omega = 1.0
            omega0 = 0.5
            gamma = 0.9
            j = 4.5
            [basis]
            kind = "efficient"
            n_max = 40
            [evolve]
            initial = { point = [1.0, 0.0, 0.5, 0.0] }
            times = [0.0, 2.0]
            [separate]
            mode = "atomic"
            reference = { epsilon = 0.5, p = 0.0, big_q = 0.1, big_p = 0.0 }
            "#,
        )
        .unwrap();
        assert_eq!(c.experiment, Some(Experiment::Evolve));
        assert_eq!(c.params.two_j(), 9);
        assert_eq!(c.basis.kind, BasisKind::Efficient);
        assert_eq!(c.evolve.initial, PointSpec::Explicit { point: [1.0, 0.0, 0.5, 0.0] });
        assert!(matches!(c.separate.reference, PointSpec::OnShell { epsilon, .. } if epsilon == 0.5));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = ExperimentConfig::from_toml("[basis]\nnmax = 3").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn flags_win_and_gate_full_scale() {
        let mut c = ExperimentConfig::default();
        let o = Overrides {
            seed: Some(9),
            j: Some(30.0),
            ..Overrides::default()
        };
        assert!(matches!(c.apply(&o), Err(HarnessError::Config(_))));
        let o = Overrides {
            full_scale: true,
            ..o
        };
        c.apply(&o).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.params.j(), 30.0);
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
