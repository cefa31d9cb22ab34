//! Configuration, output and experiment pipelines behind the `dicke`
//! command-line tool.

pub mod config;
pub mod error;
pub mod output;
pub mod pipelines;

pub use config::{BasisKind, Experiment, ExperimentConfig, Overrides};
pub use error::{HarnessError, Result};
