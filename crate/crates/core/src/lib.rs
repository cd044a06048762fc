//! Parallel-in-time multigrid (MGRIT) for unsteady spectral fractional
//! diffusion, discretized through the extension to a weighted local problem on
//! a truncated cylinder, together with the two-level convergence analysis.

pub mod assembly;
pub mod error;
pub mod mesh;
pub mod mgrit;
pub mod multigrid;
pub mod problem;
pub mod quadrature;
pub mod theory;
pub mod timestepping;
pub mod tridiag;

pub use error::{Error, Result};
