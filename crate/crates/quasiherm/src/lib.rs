//! Finite-dimensional quasi-Hermitian quantum mechanics.
//!
//! A Hamiltonian that is non-Hermitian under the Dirac inner product can
//! still generate ordinary quantum mechanics when a positive-definite metric
//! `Theta` with `H† Theta = Theta H` exists. This crate constructs and
//! certifies such metrics, factorizes them as `Theta = Omega† Omega`, maps
//! states and operators between the friendly, standard and textbook
//! representations, and integrates the coupled ket/ketket evolution equations
//! that appear once the metric itself depends on time.
//!
//! The `scenario` module adds a small structured-text front end so whole
//! time-dependent runs can be described in a file and exported as CSV/JSON
//! tables; the `quasiherm` binary wraps it.

pub mod error;
pub mod expr;
pub mod factor;
mod linalg;
pub mod matrix;
pub mod metric;
pub mod model;
pub mod evolution;
pub mod observables;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, CVector, C64};
