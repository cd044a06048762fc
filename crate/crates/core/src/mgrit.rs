//! Multigrid reduction in time.
//!
//! The space-time system is the block unit lower bidiagonal system
//! `u_0 = psi_0`, `u_i - Psi_i u_{i-1} = g_i`. Every `m`-th point of a level
//! is a C-point; the coarse level rediscretizes the problem with the summed
//! step sizes (or, for verification, uses the exact product of the fine
//! propagators). Cycles are V(1,0) with F- or FCF-relaxation, injection, and
//! the F-point correction folded into the next F-relaxation.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::mesh::TemporalGrid;
use crate::problem::Forcing;
use crate::timestepping::{attach_step, Propagator, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relaxation {
    F,
    Fcf,
}

impl Relaxation {
    pub fn label(self) -> &'static str {
        match self {
            Relaxation::F => "F",
            Relaxation::Fcf => "FCF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseOperator {
    /// Backward Euler with the coarse step `sum of the fine steps`.
    Rediscretized,
    /// Product of the fine propagators over each coarse interval.
    Ideal,
}

#[derive(Debug, Clone)]
pub struct MgritOptions {
    pub relaxation: Relaxation,
    /// Number of time levels, at least 2.
    pub levels: usize,
    /// Coarsening factor per level transition; the last entry is repeated.
    pub coarsening: Vec<usize>,
    pub halting_abs: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub coarse: CoarseOperator,
}

impl Default for MgritOptions {
    fn default() -> Self {
        MgritOptions {
            relaxation: Relaxation::Fcf,
            levels: 2,
            coarsening: vec![4],
            halting_abs: 1e-8,
            max_iters: 100,
            seed: 0,
            coarse: CoarseOperator::Rediscretized,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MgritStats {
    /// Space-time residual norms; entry 0 belongs to the F-relaxed initial
    /// guess, entry `i` to the iterate after cycle `i`.
    pub residuals: Vec<f64>,
    pub rho_observed: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// CF-splitting of `0..=n` by factor `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfSplitting {
    pub m: usize,
    pub c_points: Vec<usize>,
    pub f_points: Vec<usize>,
}

pub fn cf_split(n: usize, m: usize) -> Result<CfSplitting> {
    if m < 2 {
        return Err(invalid("coarsening", format!("factor {m} must be at least 2")));
    }
    if n == 0 || n % m != 0 {
        return Err(invalid("coarsening", format!("m = {m} does not divide N = {n}")));
    }
    let c_points = (0..=n).step_by(m).collect();
    let f_points = (0..=n).filter(|i| i % m != 0).collect();
    Ok(CfSplitting { m, c_points, f_points })
}

struct Level {
    /// Step sizes, 1-based through `tau(i) = steps[i - 1]`.
    steps: Vec<f64>,
    /// Coarsening factor to the next level (unused on the coarsest).
    m: usize,
}

/// Space-time problem with its level hierarchy.
pub struct SpaceTimeSystem<'a> {
    prop: &'a Propagator,
    grid: &'a TemporalGrid,
    forcing: &'a Forcing,
    levels: Vec<Level>,
    coarse: CoarseOperator,
    relaxation: Relaxation,
}

type States = Vec<Vec<f64>>;

impl<'a> SpaceTimeSystem<'a> {
    pub fn new(
        prop: &'a Propagator,
        grid: &'a TemporalGrid,
        forcing: &'a Forcing,
        opts: &MgritOptions,
    ) -> Result<Self> {
        if opts.levels < 2 {
            return Err(invalid("levels", "at least two time levels are required"));
        }
        if opts.coarse == CoarseOperator::Ideal && opts.levels != 2 {
            return Err(invalid("levels", "the ideal coarse operator is two-level only"));
        }
        let factor = |l: usize| -> usize {
            if opts.coarsening.is_empty() {
                grid.coarsening
            } else {
                opts.coarsening[l.min(opts.coarsening.len() - 1)]
            }
        };
        let mut levels = Vec::new();
        let mut steps = grid.steps.clone();
        for l in 0..opts.levels {
            if l + 1 == opts.levels {
                levels.push(Level { steps, m: 1 });
                break;
            }
            let m = factor(l);
            cf_split(steps.len(), m)?;
            let coarse: Vec<f64> = steps.chunks(m).map(|c| c.iter().sum()).collect();
            levels.push(Level { steps, m });
            steps = coarse;
        }
        Ok(SpaceTimeSystem {
            prop,
            grid,
            forcing,
            levels,
            coarse: opts.coarse,
            relaxation: opts.relaxation,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_points(&self, level: usize) -> usize {
        self.levels[level].steps.len() + 1
    }

    /// Linear part of the level propagator for point `i`.
    fn propagate(&self, level: usize, i: usize, v: &[f64]) -> Result<Vec<f64>> {
        if level == 0 {
            return self.prop.step(v, self.levels[0].steps[i - 1], None).map_err(|e| attach_step(e, i));
        }
        match self.coarse {
            CoarseOperator::Rediscretized => self
                .prop
                .step(v, self.levels[level].steps[i - 1], None)
                .map_err(|e| attach_step(e, i)),
            CoarseOperator::Ideal => {
                let m = self.levels[level - 1].m;
                let mut w = v.to_vec();
                for s in (i - 1) * m + 1..=i * m {
                    w = self.propagate(level - 1, s, &w)?;
                }
                Ok(w)
            }
        }
    }

    /// `Psi_i v + g_i` on the given level, where the additive term is the
    /// forcing on the finest level and `rhs[i]` elsewhere.
    fn affine(&self, level: usize, i: usize, v: &[f64], rhs: Option<&States>) -> Result<Vec<f64>> {
        if level == 0 {
            return self.prop.step_on(self.grid, i, v, self.forcing);
        }
        let mut w = self.propagate(level, i, v)?;
        if let Some(g) = rhs {
            for (a, b) in w.iter_mut().zip(&g[i]) {
                *a += b;
            }
        }
        Ok(w)
    }

    /// Overwrites every F-point by propagation from its interval's C-point.
    pub fn f_relax(&self, level: usize, u: &mut States, rhs: Option<&States>) -> Result<()> {
        let m = self.levels[level].m;
        u.par_chunks_mut(m).enumerate().try_for_each(|(k, chunk)| {
            for s in 1..chunk.len() {
                let next = self.affine(level, k * m + s, &chunk[s - 1], rhs)?;
                chunk[s] = next;
            }
            Ok(())
        })
    }

    /// Updates every C-point but `t_0` from its preceding F-point.
    pub fn c_relax(&self, level: usize, u: &mut States, rhs: Option<&States>) -> Result<()> {
        let m = self.levels[level].m;
        let nc = (self.n_points(level) - 1) / m;
        let updates: Vec<Vec<f64>> = (1..=nc)
            .into_par_iter()
            .map(|k| self.affine(level, k * m, &u[k * m - 1], rhs))
            .collect::<Result<_>>()?;
        for (k, v) in updates.into_iter().enumerate() {
            u[(k + 1) * m] = v;
        }
        Ok(())
    }

    /// Residual `g_i + Psi_i u_{i-1} - u_i` at the C-points `k m`, `k >= 1`;
    /// entry 0 is the (zero) residual of the initial condition row.
    fn c_residual(&self, level: usize, u: &States, rhs: Option<&States>) -> Result<States> {
        let m = self.levels[level].m;
        let nc = (self.n_points(level) - 1) / m;
        let mut out: States = (1..=nc)
            .into_par_iter()
            .map(|k| {
                let mut r = self.affine(level, k * m, &u[k * m - 1], rhs)?;
                for (a, b) in r.iter_mut().zip(&u[k * m]) {
                    *a -= b;
                }
                Ok(r)
            })
            .collect::<Result<_>>()?;
        out.insert(0, vec![0.0; u[0].len()]);
        Ok(out)
    }

    /// Full residual on the finest level, row by row.
    pub fn residual(&self, u: &States, psi0: &[f64]) -> Result<States> {
        let mut out: States = (1..self.n_points(0))
            .into_par_iter()
            .map(|i| {
                let mut r = self.affine(0, i, &u[i - 1], None)?;
                for (a, b) in r.iter_mut().zip(&u[i]) {
                    *a -= b;
                }
                Ok(r)
            })
            .collect::<Result<_>>()?;
        out.insert(0, psi0.iter().zip(&u[0]).map(|(a, b)| a - b).collect());
        Ok(out)
    }

    fn relax(&self, level: usize, u: &mut States, rhs: Option<&States>, already_f: bool) -> Result<()> {
        if !already_f {
            self.f_relax(level, u, rhs)?;
        }
        if self.relaxation == Relaxation::Fcf {
            self.c_relax(level, u, rhs)?;
            self.f_relax(level, u, rhs)?;
        }
        Ok(())
    }

    /// Solves the level exactly by forward substitution.
    fn forward_solve(&self, level: usize, rhs: &States) -> Result<States> {
        let mut u = vec![rhs[0].clone()];
        for i in 1..self.n_points(level) {
            let next = self.affine(level, i, &u[i - 1], Some(rhs))?;
            u.push(next);
        }
        Ok(u)
    }

    /// Coarse-grid correction of the C-points of `level` from the injected
    /// C-point residual `r`.
    fn coarse_correct(&self, level: usize, u: &mut States, r: States) -> Result<()> {
        let e = if level + 2 == self.n_levels() {
            self.forward_solve(level + 1, &r)?
        } else {
            let mut e: States = vec![vec![0.0; r[0].len()]; r.len()];
            self.cycle(level + 1, &mut e, &r)?;
            e
        };
        let m = self.levels[level].m;
        for (k, ek) in e.iter().enumerate().skip(1) {
            for (a, b) in u[k * m].iter_mut().zip(ek) {
                *a += b;
            }
        }
        Ok(())
    }

    /// One V-cycle on a coarse level starting from `u`, ending with the
    /// F-point interpolation.
    fn cycle(&self, level: usize, u: &mut States, rhs: &States) -> Result<()> {
        self.relax(level, u, Some(rhs), false)?;
        let r = self.c_residual(level, u, Some(rhs))?;
        self.coarse_correct(level, u, r)?;
        self.f_relax(level, u, Some(rhs))
    }

    /// Iterates finest-level cycles from a seeded random initial guess.
    pub fn solve(&self, psi0: &[f64], opts: &MgritOptions) -> Result<(Trajectory, MgritStats)> {
        let n = self.prop.n();
        let npts = self.n_points(0);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut u: States = Vec::with_capacity(npts);
        u.push(psi0.to_vec());
        for _ in 1..npts {
            u.push((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect());
        }
        self.f_relax(0, &mut u, None)?;
        let mut r = self.c_residual(0, &u, None)?;
        let mut residuals = vec![norm_all(&r)];
        let mut converged = residuals[0] < opts.halting_abs;
        let mut iterations = 0;
        while !converged && iterations < opts.max_iters {
            if self.relaxation == Relaxation::Fcf {
                self.relax(0, &mut u, None, true)?;
                r = self.c_residual(0, &u, None)?;
            }
            self.coarse_correct(0, &mut u, r)?;
            // Deferred F-correction, which is also the leading F-relaxation
            // of the next cycle.
            self.f_relax(0, &mut u, None)?;
            r = self.c_residual(0, &u, None)?;
            iterations += 1;
            residuals.push(norm_all(&r));
            converged = *residuals.last().unwrap() < opts.halting_abs;
        }
        let rho_observed = residuals
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max);
        let traj = Trajectory {
            times: self.grid.points.clone(),
            states: u,
        };
        Ok((
            traj,
            MgritStats {
                residuals,
                rho_observed,
                iterations,
                converged,
            },
        ))
    }
}

/// Convenience wrapper around [`SpaceTimeSystem::solve`].
pub fn solve(
    prop: &Propagator,
    grid: &TemporalGrid,
    forcing: &Forcing,
    psi0: &[f64],
    opts: &MgritOptions,
) -> Result<(Trajectory, MgritStats)> {
    SpaceTimeSystem::new(prop, grid, forcing, opts)?.solve(psi0, opts)
}

/// Plain l2 norm over all rows, summed in a fixed order.
pub fn norm_all(rows: &States) -> f64 {
    rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitting_partitions_points() {
        let s = cf_split(12, 4).unwrap();
        assert_eq!(s.c_points, vec![0, 4, 8, 12]);
        assert_eq!(s.f_points.len(), 9);
        assert!(cf_split(1, 1).is_err());
        assert!(cf_split(10, 4).is_err());
    }
}
