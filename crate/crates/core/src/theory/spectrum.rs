use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mesh::TemporalGrid;

/// Generalized eigenvalues of `(Q, M)`, ascending.
#[derive(Debug, Clone)]
pub struct ModeSpectrum {
    pub sigma: Vec<f64>,
}

impl ModeSpectrum {
    pub fn new(mut sigma: Vec<f64>) -> Result<Self> {
        if let Some(s) = sigma.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::NotSpd(format!("nonpositive mode {s}")));
        }
        sigma.sort_by(f64::total_cmp);
        Ok(ModeSpectrum { sigma })
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Fine eigenvalues `1 / (1 + tau_j sigma)` for mode `w`.
    pub fn fine(&self, w: usize, grid: &TemporalGrid) -> Vec<f64> {
        grid.steps.iter().map(|t| 1.0 / (1.0 + t * self.sigma[w])).collect()
    }

    /// Coarse eigenvalues `1 / (1 + tau~_k sigma)` for mode `w`.
    pub fn coarse(&self, w: usize, grid: &TemporalGrid) -> Vec<f64> {
        grid.coarse_steps.iter().map(|t| 1.0 / (1.0 + t * self.sigma[w])).collect()
    }

    /// Whether every fine and coarse eigenvalue lies in `(0, 1)`.
    pub fn strongly_stable(&self, grid: &TemporalGrid) -> bool {
        (0..self.len()).all(|w| {
            self.fine(w, grid)
                .into_iter()
                .chain(self.coarse(w, grid))
                .all(|l| l > 0.0 && l < 1.0)
        })
    }
}

/// Spectrum of the pencil `(q, mass)` through the Cholesky reduction
/// `L^{-1} q L^{-T}`.
pub fn spectrum(q: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<ModeSpectrum> {
    let n = q.nrows();
    if q.ncols() != n || mass.nrows() != n || mass.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: mass.nrows(),
        });
    }
    let asym = (q - q.transpose()).amax();
    if asym > 1e-10 * q.amax() {
        return Err(Error::NotSpd(format!("operator asymmetry {asym:e}")));
    }
    let chol = Cholesky::new(mass.clone()).ok_or_else(|| Error::NotSpd("mass matrix".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(q)
        .ok_or_else(|| Error::NotSpd("singular mass factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::NotSpd("singular mass factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    ModeSpectrum::new(eig.eigenvalues.iter().copied().collect())
}
