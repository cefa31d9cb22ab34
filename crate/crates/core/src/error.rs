use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("matrix is not symmetric (max |H - H^T| = {0:e})")]
    NotSymmetric(f64),

    #[error("eigensolver failed with LAPACK info = {0}")]
    Eigensolver(i32),

    #[error("Lanczos iteration did not converge after {0} steps")]
    LanczosNotConverged(usize),

    #[error("point violates the Bloch constraint Q^2 + P^2 <= 4 (Z^2 = {0})")]
    BlochConstraint(f64),

    #[error("truncation tail {tail:e} exceeds tolerance {tol:e}")]
    TruncationTail { tail: f64, tol: f64 },

    #[error("energy {epsilon} is not above the ground-state energy {ground}")]
    ZeroVolume { epsilon: f64, ground: f64 },

    #[error("probabilities are not normalized (sum = {0})")]
    Unnormalized(f64),

    #[error("invalid probability entry {0}")]
    InvalidProbability(f64),

    #[error("converged eigenstates capture weight {captured} < required {required}")]
    InsufficientCoverage { captured: f64, required: f64 },

    #[error("alpha = {alpha} is below the validity floor {floor}")]
    AlphaBelowFloor { alpha: f64, floor: f64 },

    #[error("grid resolution {resolution} below floor {floor}")]
    GridResolution { resolution: usize, floor: usize },

    #[error("no real q-root on the shell for the requested displacement: {0}")]
    ShellEdge(String),

    #[error("state has no support on the shell (C_eps = {value:e} +/- {stderr:e})")]
    NoShellSupport { value: f64, stderr: f64 },

    #[error("bounding box captures only {captured} of the Husimi mass")]
    BoxCapture { captured: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spectrum container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
