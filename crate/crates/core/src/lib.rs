//! Numerical toolkit for birth-death chains on ℕ: u-modified chains and their
//! Feynman-Kac potentials, gradient intertwinings, Wasserstein curvature,
//! spectral-gap bounds, functional inequalities, hitting times and stochastic
//! orderings. Every identity is exposed as a checkable residual or margin.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod exec;
pub mod inequalities;
pub mod intertwine;
pub mod model;
pub mod numeric;
pub mod optimize;
pub mod ordering;
pub mod semigroup;
pub mod simulate;
pub mod transport;
pub mod tridiag;

pub use error::{Error, Result};
pub use exec::Execution;
