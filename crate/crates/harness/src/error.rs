use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error(transparent)]
    Core(#[from] dicke_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    /// Process exit status: 2 for bad configuration, 3 for truncations or
    /// eigensolvers that did not converge, 4 for other numerical failures.
    pub fn exit_code(&self) -> u8 {
        use dicke_core::Error as E;
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Convergence(_) => 3,
            HarnessError::Core(e) => match e {
                E::InvalidParams(_) | E::InvalidArgument(_) | E::AlphaBelowFloor { .. } | E::GridResolution { .. } => 2,
                E::InsufficientCoverage { .. } | E::TruncationTail { .. } | E::LanczosNotConverged(_) => 3,
                _ => 4,
            },
            HarnessError::Io(_) | HarnessError::Csv(_) | HarnessError::Json(_) => 4,
        }
    }
}
