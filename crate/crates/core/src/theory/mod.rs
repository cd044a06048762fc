//! Two-level convergence analysis of MGRIT for the backward Euler
//! propagators.
//!
//! Both propagators are diagonalized by the generalized eigenvectors of the
//! pencil `(Q, M)`, so every quantity reduces to scalar recurrences per mode
//! `sigma`: the fine eigenvalue of step `j` is `1 / (1 + tau_j sigma)` and the
//! coarse one `1 / (1 + tau~_k sigma)`.

mod bounds;
mod oracle;
mod spectrum;

pub use bounds::*;
pub use oracle::*;
pub use spectrum::*;
