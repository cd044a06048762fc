//! Backward Euler propagators on the trace unknowns.
//!
//! One step maps `u` to the solution `v` of
//! `(M + tau Q) v = M u + tau F`, where `M` is the time mass matrix and `Q` the
//! trace operator. Either `Q` is formed densely, or the step is carried out on
//! the full extended system whose trace block reproduces it.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use parking_lot::Mutex;

use crate::assembly::{schur_complement, spmv, to_dense, OperatorSet};
use crate::error::{invalid, Error, Result};
use crate::mesh::TemporalGrid;
use crate::multigrid::BlockSolver;
use crate::problem::Forcing;

/// How a step is computed.
pub enum StepMode {
    /// Dense `M + tau Q` factorizations, one per distinct step size.
    TraceReduced {
        q: DMatrix<f64>,
        mass: DMatrix<f64>,
        cache: Mutex<HashMap<u64, Arc<Cholesky<f64, Dyn>>>>,
    },
    /// The extended system with auxiliary unknowns eliminated by the solver.
    FullBlock(Box<dyn BlockSolver>),
}

/// Fine and coarse propagators share one object; the step size selects the
/// member of the family.
pub struct Propagator {
    pub ops: Arc<OperatorSet>,
    pub mode: StepMode,
    solves: AtomicUsize,
    inner_iterations: AtomicUsize,
}

const TRACE_CACHE_LIMIT: usize = 1 << 14;

impl Propagator {
    pub fn trace_reduced(ops: Arc<OperatorSet>) -> Result<Self> {
        let q = schur_complement(&ops)?;
        Ok(Self::with_trace_operator(ops, q))
    }

    pub fn with_trace_operator(ops: Arc<OperatorSet>, q: DMatrix<f64>) -> Self {
        let mass = to_dense(&ops.mass_raw);
        Propagator {
            ops,
            mode: StepMode::TraceReduced {
                q,
                mass,
                cache: Mutex::new(HashMap::new()),
            },
            solves: AtomicUsize::new(0),
            inner_iterations: AtomicUsize::new(0),
        }
    }

    pub fn full_block(ops: Arc<OperatorSet>, solver: Box<dyn BlockSolver>) -> Self {
        Propagator {
            ops,
            mode: StepMode::FullBlock(solver),
            solves: AtomicUsize::new(0),
            inner_iterations: AtomicUsize::new(0),
        }
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }

    /// Number of spatial solves and their summed inner iteration count since
    /// the last reset.
    pub fn solve_counts(&self) -> (usize, usize) {
        (self.solves.load(Ordering::Relaxed), self.inner_iterations.load(Ordering::Relaxed))
    }

    pub fn reset_counts(&self) {
        self.solves.store(0, Ordering::Relaxed);
        self.inner_iterations.store(0, Ordering::Relaxed);
    }

    fn trace_factor(&self, tau: f64) -> Result<Arc<Cholesky<f64, Dyn>>> {
        let StepMode::TraceReduced { q, mass, cache } = &self.mode else {
            unreachable!()
        };
        let key = tau.to_bits();
        if let Some(c) = cache.lock().get(&key) {
            return Ok(c.clone());
        }
        let a = mass + q * tau;
        let chol = Cholesky::new(a).ok_or_else(|| Error::NotSpd("M + tau Q".into()))?;
        let chol = Arc::new(chol);
        let mut guard = cache.lock();
        if guard.len() >= TRACE_CACHE_LIMIT {
            guard.clear();
        }
        guard.insert(key, chol.clone());
        Ok(chol)
    }

    /// `(M + tau Q)^{-1} (M u + tau load)`.
    pub fn step(&self, u: &[f64], tau: f64, load: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.n();
        if u.len() != n {
            return Err(Error::Dimension { expected: n, got: u.len() });
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("time step {tau} must be positive")));
        }
        let mut rhs = vec![0.0; n];
        spmv(&self.ops.mass_raw, u, &mut rhs);
        if let Some(f) = load {
            for (r, fi) in rhs.iter_mut().zip(f) {
                *r += tau * fi;
            }
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        match &self.mode {
            StepMode::TraceReduced { .. } => {
                let chol = self.trace_factor(tau)?;
                let v = chol.solve(&DVector::from_vec(rhs));
                Ok(v.as_slice().to_vec())
            }
            StepMode::FullBlock(solver) => {
                let mut b = vec![0.0; self.ops.block_dim()];
                for (bi, ri) in b.iter_mut().zip(&rhs) {
                    *bi = ri / tau;
                }
                let (x, stats) = solver.solve(tau, &b)?;
                self.inner_iterations.fetch_add(stats.iterations, Ordering::Relaxed);
                if !stats.converged {
                    return Err(Error::SolveNotConverged {
                        iterations: stats.iterations,
                        final_residual: stats.final_residual,
                    });
                }
                Ok(x[..n].to_vec())
            }
        }
    }

    /// Step `j` (1-based) of `grid`, with the forcing at its right endpoint.
    pub fn step_on(&self, grid: &TemporalGrid, j: usize, u: &[f64], forcing: &Forcing) -> Result<Vec<f64>> {
        let load = forcing.at(grid.points[j]);
        self.step(u, grid.tau(j), load.as_deref()).map_err(|e| attach_step(e, j))
    }
}

pub(crate) fn attach_step(e: Error, step: usize) -> Error {
    match e {
        Error::SolveNotConverged {
            iterations,
            final_residual,
        } => Error::StepNotConverged {
            step,
            iterations,
            final_residual,
        },
        other => other,
    }
}

/// Trace states at every point of a temporal grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Largest l2 difference between corresponding states.
    pub fn max_difference(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Time-stepping over the whole grid.
pub fn sequential_solve(prop: &Propagator, u0: &[f64], grid: &TemporalGrid, forcing: &Forcing) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(u0.to_vec());
    for j in 1..=grid.n_steps() {
        let next = prop.step_on(grid, j, &states[j - 1], forcing)?;
        states.push(next);
    }
    Ok(Trajectory {
        times: grid.points.clone(),
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_spatial_mesh, build_temporal_grid, build_zmesh, DomainTag, GridKind};
    use crate::multigrid::DirectSolver;

    fn ops(k: u32, m: usize, alpha: f64) -> Arc<OperatorSet> {
        let mesh = build_spatial_mesh(DomainTag::UnitSquare, k).unwrap();
        let z = build_zmesh(m, alpha, 1.0).unwrap();
        Arc::new(OperatorSet::new(&mesh, &z, alpha).unwrap())
    }

    #[test]
    fn zero_stays_zero() {
        let o = ops(2, 8, 1.0);
        let p = Propagator::trace_reduced(o.clone()).unwrap();
        let v = p.step(&vec![0.0; o.n()], 0.1, None).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn trace_and_block_steps_agree() {
        let o = ops(2, 8, 0.8);
        let trace = Propagator::trace_reduced(o.clone()).unwrap();
        let block = Propagator::full_block(o.clone(), Box::new(DirectSolver::new(&o)));
        let u: Vec<f64> = (0..o.n()).map(|i| (i as f64 * 0.7).cos()).collect();
        let f: Vec<f64> = (0..o.n()).map(|i| (i as f64 * 0.3).sin()).collect();
        let a = trace.step(&u, 1e-3, Some(&f)).unwrap();
        let b = block.step(&u, 1e-3, Some(&f)).unwrap();
        let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn one_step_grid_is_one_step() {
        let o = ops(2, 8, 1.2);
        let p = Propagator::trace_reduced(o.clone()).unwrap();
        let grid = build_temporal_grid(GridKind::Uniform, 1, 0.3, 1).unwrap();
        let u0: Vec<f64> = (0..o.n()).map(|i| i as f64).collect();
        let traj = sequential_solve(&p, &u0, &grid, &Forcing::Zero).unwrap();
        assert_eq!(traj.states[1], p.step(&u0, 0.3, None).unwrap());
    }
}
