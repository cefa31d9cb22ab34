//! Phase-space localization toolkit for the Dicke model: exact
//! diagonalization, coherent states, Husimi functions, classical energy
//! shells and Rényi occupations.

pub mod classical;
pub mod error;
pub mod husimi;
pub mod linalg;
pub mod model;
pub mod renyi;
pub mod rng;
pub mod states;
pub mod stats;

pub use error::{Error, Result};
