//! Dense per-mode residual propagators, built directly from eigenvalue
//! products. Used to cross-check the tridiagonal route on small grids.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::TemporalGrid;
use crate::mgrit::Relaxation;

use super::spectrum::ModeSpectrum;

/// Largest coarse size for which the dense matrices are formed.
pub const DENSE_LIMIT: usize = 4096;

pub fn check_dense_size(n_coarse: usize) -> Result<()> {
    if n_coarse > DENSE_LIMIT {
        return Err(Error::ResourceGuard(format!(
            "dense propagator with {n_coarse} coarse intervals exceeds {DENSE_LIMIT}"
        )));
    }
    Ok(())
}

fn mu_product(mu: &[f64], from: usize, to: usize) -> f64 {
    // 1-based interval indices, inclusive; empty when from > to.
    (from..=to).map(|s| mu[s - 1]).product()
}

/// Two-level residual propagator with FCF-relaxation on the C-points
/// `0..=N_c`. `fine[k]` is the fine eigenvalue product over interval `k+1`,
/// `mu[k]` its coarse eigenvalue and `gap[k] = fine[k] - mu[k]`.
pub fn fcf_matrix(fine: &[f64], mu: &[f64], gap: &[f64]) -> DMatrix<f64> {
    let nc = mu.len();
    let mut t = DMatrix::zeros(nc + 1, nc + 1);
    for r in 2..=nc {
        for c in 0..=r - 2 {
            t[(r, c)] = gap[r - 1] * mu_product(mu, c + 2, r - 1) * fine[c];
        }
    }
    t
}

/// Residual propagator with F-relaxation only.
pub fn f_matrix(mu: &[f64], gap: &[f64]) -> DMatrix<f64> {
    let nc = mu.len();
    let mut t = DMatrix::zeros(nc + 1, nc + 1);
    for r in 1..=nc {
        for c in 0..r {
            t[(r, c)] = gap[r - 1] * mu_product(mu, c + 1, r - 1);
        }
    }
    t
}

/// Closed-form Moore-Penrose inverse of [`fcf_matrix`]; needs every gap
/// and fine product beyond the first interval nonzero.
pub fn fcf_pseudoinverse(fine: &[f64], mu: &[f64], gap: &[f64]) -> DMatrix<f64> {
    let nc = mu.len();
    let mut p = DMatrix::zeros(nc + 1, nc + 1);
    for l in 2..=nc {
        p[(l - 2, l)] = 1.0 / (fine[l - 2] * gap[l - 1]);
    }
    for s in 2..nc {
        p[(s - 1, s)] = -mu[s - 1] / (fine[s - 1] * gap[s - 1]);
    }
    p
}

/// Largest deviation over the four Moore-Penrose identities.
pub fn moore_penrose_residual(t: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let tp = t * p;
    let pt = p * t;
    [
        (&tp * t - t).amax(),
        (&pt * p - p).amax(),
        (&tp - tp.transpose()).amax(),
        (&pt - pt.transpose()).amax(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

pub fn spectral_norm(t: &DMatrix<f64>) -> f64 {
    t.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Fine eigenvalue products, coarse eigenvalues and their differences for
/// one mode, formed as plain products.
pub fn mode_products(sigma: f64, grid: &TemporalGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let fine: Vec<f64> = grid
        .steps
        .chunks(grid.coarsening)
        .map(|c| c.iter().map(|t| 1.0 / (1.0 + t * sigma)).product())
        .collect();
    let mu: Vec<f64> = grid.coarse_steps.iter().map(|t| 1.0 / (1.0 + t * sigma)).collect();
    let gap = fine.iter().zip(&mu).map(|(a, b)| a - b).collect();
    (fine, mu, gap)
}

/// Largest spectral norm of the dense per-mode propagators.
pub fn dense_oracle_norm(spec: &ModeSpectrum, grid: &TemporalGrid, relaxation: Relaxation) -> Result<f64> {
    check_dense_size(grid.n_coarse())?;
    Ok(spec
        .sigma
        .iter()
        .map(|&s| {
            let (fine, mu, gap) = mode_products(s, grid);
            match relaxation {
                Relaxation::Fcf => spectral_norm(&fcf_matrix(&fine, &mu, &gap)),
                Relaxation::F => spectral_norm(&f_matrix(&mu, &gap)),
            }
        })
        .fold(0.0, f64::max))
}
