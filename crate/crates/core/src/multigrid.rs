//! Geometric multigrid for the per-step block systems.
//!
//! The spatial mesh is coarsened by factor two per level while the extended
//! mesh stays fixed, so every level carries the same `F` slabs. Smoothing is
//! a block Gauss-Seidel sweep whose blocks are the vertical lines: for one
//! spatial vertex, all its `F` extended unknowns (trace row included) are
//! solved together from a tridiagonal system.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use sprs::{CsMat, TriMat};

use crate::assembly::{assemble_spatial, spmv, OperatorSet, SparseFactor};
use crate::error::{invalid, Error, Result};
use crate::mesh::{build_spatial_mesh, SpatialMesh};
use crate::tridiag::thomas;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub converged: bool,
}

/// Solver of `B(tau) x = b` for a fixed operator set.
pub trait BlockSolver: Send + Sync {
    fn solve(&self, tau: f64, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)>;
}

/// Color classes of a vertex graph such that no two vertices of one class
/// are coupled. Lattice parity is tried first; meshes whose couplings break
/// it (the P1 mass matrix couples diagonal neighbours) get a greedy coloring.
pub fn color_vertices(mesh: &SpatialMesh, pattern: &CsMat<f64>) -> Vec<Vec<usize>> {
    let n = pattern.rows();
    let parity: Vec<usize> = (0..n)
        .map(|v| ((mesh.lattice[v][0] + mesh.lattice[v][1]).rem_euclid(2)) as usize)
        .collect();
    let independent = |color: &[usize]| {
        pattern
            .outer_iterator()
            .enumerate()
            .all(|(r, row)| row.iter().all(|(c, _)| c == r || color[c] != color[r]))
    };
    let color = if independent(&parity) {
        parity
    } else {
        let mut color = vec![usize::MAX; n];
        for (r, row) in pattern.outer_iterator().enumerate() {
            let used: Vec<usize> = row.iter().map(|(c, _)| color[c]).collect();
            color[r] = (0..).find(|k| !used.contains(k)).unwrap();
        }
        color
    };
    let classes = color.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); classes];
    for (v, &c) in color.iter().enumerate() {
        out[c].push(v);
    }
    out
}

/// P1 interpolation from the interior vertices of `coarse` to those of
/// `fine`, for structured meshes related by one uniform refinement.
pub fn prolongation(fine: &SpatialMesh, coarse: &SpatialMesh) -> Result<CsMat<f64>> {
    if fine.level != coarse.level + 1 || fine.domain != coarse.domain {
        return Err(invalid("level", "meshes are not one refinement apart"));
    }
    let index: HashMap<[i64; 2], usize> = coarse.lattice[..coarse.n_interior]
        .iter()
        .enumerate()
        .map(|(k, &p)| (p, k))
        .collect();
    let mut tri = TriMat::new((fine.n_interior, coarse.n_interior));
    for (v, &[i, j]) in fine.lattice[..fine.n_interior].iter().enumerate() {
        // Coarse endpoints of the edge (or the vertex) that carries `v`;
        // odd-odd points sit on the lower-left to upper-right diagonal.
        let (a, b) = ([i.div_euclid(2), j.div_euclid(2)], [(i + 1).div_euclid(2), (j + 1).div_euclid(2)]);
        if a == b {
            if let Some(&c) = index.get(&a) {
                tri.add_triplet(v, c, 1.0);
            }
        } else {
            for p in [a, b] {
                if let Some(&c) = index.get(&p) {
                    tri.add_triplet(v, c, 0.5);
                }
            }
        }
    }
    Ok(tri.to_csr())
}

pub struct MgLevel {
    pub mesh: SpatialMesh,
    pub ops: OperatorSet,
    pub colors: Vec<Vec<usize>>,
    /// Interpolation from the next coarser level; `None` on the coarsest.
    pub prolong: Option<CsMat<f64>>,
    pub restrict: Option<CsMat<f64>>,
}

pub struct MgHierarchy {
    pub levels: Vec<MgLevel>,
    pub tol_reduction: f64,
    pub max_it: usize,
    coarse_factors: Mutex<HashMap<u64, Arc<SparseFactor>>>,
}

const COARSE_CACHE_LIMIT: usize = 4096;

impl MgHierarchy {
    /// Builds all levels from the finest mesh down to refinement level 1.
    pub fn new(finest: &SpatialMesh, ops: &OperatorSet) -> Result<Self> {
        let mut levels = Vec::new();
        let mut mesh = finest.clone();
        let mut level_ops = ops.clone();
        loop {
            let colors = color_vertices(&mesh, &level_ops.mass_raw);
            let coarser = if mesh.level > 1 {
                Some(build_spatial_mesh(mesh.domain, mesh.level - 1)?)
            } else {
                None
            };
            let prolong = coarser.as_ref().map(|c| prolongation(&mesh, c)).transpose()?;
            let restrict = prolong.as_ref().map(|p| p.transpose_view().to_csr());
            levels.push(MgLevel {
                mesh: mesh.clone(),
                ops: level_ops.clone(),
                colors,
                prolong,
                restrict,
            });
            match coarser {
                Some(c) => {
                    let (m, k) = assemble_spatial(&c)?;
                    level_ops = OperatorSet::from_parts(
                        m,
                        k,
                        ops.z_mass.clone(),
                        ops.z_stiff.clone(),
                        ops.alpha,
                        ops.d_alpha,
                    );
                    mesh = c;
                }
                None => break,
            }
        }
        Ok(MgHierarchy {
            levels,
            tol_reduction: 1e8,
            max_it: 100,
            coarse_factors: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_tolerance(mut self, tol_reduction: f64, max_it: usize) -> Self {
        self.tol_reduction = tol_reduction;
        self.max_it = max_it;
        self
    }

    fn coarse_factor(&self, tau: f64) -> Result<Arc<SparseFactor>> {
        let key = tau.to_bits();
        if let Some(f) = self.coarse_factors.lock().get(&key) {
            return Ok(f.clone());
        }
        let ops = &self.levels.last().unwrap().ops;
        let factor = Arc::new(SparseFactor::new(&ops.block_csr(Some(tau), 0))?);
        let mut cache = self.coarse_factors.lock();
        if cache.len() >= COARSE_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, factor.clone());
        Ok(factor)
    }

    /// One symmetric line-smoothing pass: colors in order, or reversed.
    pub fn smooth(&self, level: usize, tau: f64, b: &[f64], x: &mut [f64], reverse: bool) {
        let lv = &self.levels[level];
        let order: Vec<&Vec<usize>> = if reverse {
            lv.colors.iter().rev().collect()
        } else {
            lv.colors.iter().collect()
        };
        let mut work = LineWork::new(lv.ops.f());
        for class in order {
            for &v in class {
                line_solve(&lv.ops, tau, v, b, x, &mut work);
            }
        }
    }

    /// Line sweep over one color class.
    pub fn sweep_color(&self, level: usize, tau: f64, color: usize, b: &[f64], x: &mut [f64]) {
        let lv = &self.levels[level];
        let mut work = LineWork::new(lv.ops.f());
        for &v in &lv.colors[color] {
            line_solve(&lv.ops, tau, v, b, x, &mut work);
        }
    }

    pub fn residual(&self, level: usize, tau: f64, b: &[f64], x: &[f64], r: &mut [f64]) {
        let ops = &self.levels[level].ops;
        ops.block(tau).expect("positive step").apply(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }

    /// V(1,1)-cycle on `level`, improving `x` in place.
    pub fn vcycle(&self, level: usize, tau: f64, b: &[f64], x: &mut [f64]) -> Result<()> {
        if level + 1 == self.levels.len() {
            let sol = self.coarse_factor(tau)?.solve(b);
            x.copy_from_slice(&sol);
            return Ok(());
        }
        let lv = &self.levels[level];
        let f = lv.ops.f();
        let n = lv.ops.n();
        let nc = self.levels[level + 1].ops.n();
        self.smooth(level, tau, b, x, false);
        let mut r = vec![0.0; n * f];
        self.residual(level, tau, b, x, &mut r);
        let restrict = lv.restrict.as_ref().unwrap();
        let prolong = lv.prolong.as_ref().unwrap();
        let mut rc = vec![0.0; nc * f];
        for j in 0..f {
            spmv(restrict, &r[j * n..(j + 1) * n], &mut rc[j * nc..(j + 1) * nc]);
        }
        let mut ec = vec![0.0; nc * f];
        self.vcycle(level + 1, tau, &rc, &mut ec)?;
        let mut e = vec![0.0; n];
        for j in 0..f {
            spmv(prolong, &ec[j * nc..(j + 1) * nc], &mut e);
            for (xi, ei) in x[j * n..(j + 1) * n].iter_mut().zip(&e) {
                *xi += ei;
            }
        }
        self.smooth(level, tau, b, x, true);
        Ok(())
    }

    /// Iterates V-cycles from `x` until the l2 residual has dropped by
    /// `tol_reduction`.
    pub fn iterate(&self, tau: f64, b: &[f64], x: &mut [f64]) -> Result<SolveStats> {
        let dim = self.levels[0].ops.block_dim();
        if b.len() != dim || x.len() != dim {
            return Err(Error::Dimension { expected: dim, got: b.len() });
        }
        let mut r = vec![0.0; dim];
        self.residual(0, tau, b, x, &mut r);
        let r0 = norm(&r);
        let target = r0 / self.tol_reduction;
        let mut rk = r0;
        let mut it = 0;
        while rk > target && it < self.max_it {
            self.vcycle(0, tau, b, x)?;
            self.residual(0, tau, b, x, &mut r);
            rk = norm(&r);
            it += 1;
        }
        Ok(SolveStats {
            iterations: it,
            initial_residual: r0,
            final_residual: rk,
            converged: rk <= target,
        })
    }
}

impl BlockSolver for MgHierarchy {
    fn solve(&self, tau: f64, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let mut x = vec![0.0; rhs.len()];
        let stats = self.iterate(tau, rhs, &mut x)?;
        Ok((x, stats))
    }
}

struct LineWork {
    rhs: Vec<f64>,
    kn: Vec<f64>,
    mn: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    scratch: Vec<f64>,
}

impl LineWork {
    fn new(f: usize) -> Self {
        LineWork {
            rhs: vec![0.0; f],
            kn: vec![0.0; f],
            mn: vec![0.0; f],
            diag: vec![0.0; f],
            off: vec![0.0; f.saturating_sub(1)],
            scratch: vec![0.0; f],
        }
    }
}

/// Exact solve for the `F` unknowns of vertex `v`, other vertices frozen.
fn line_solve(ops: &OperatorSet, tau: f64, v: usize, b: &[f64], x: &mut [f64], w: &mut LineWork) {
    let n = ops.n();
    let f = ops.f();
    let inv_d = 1.0 / ops.d_alpha;
    let ptr = ops.mass_raw.indptr();
    let ptr = ptr.raw_storage();
    let cols = ops.mass_raw.indices();
    let mvals = ops.mass_raw.data();
    let kvals = ops.stiff_raw.data();
    w.kn.fill(0.0);
    w.mn.fill(0.0);
    let (mut kvv, mut mvv) = (0.0, 0.0);
    for p in ptr[v]..ptr[v + 1] {
        let c = cols[p];
        if c == v {
            kvv = kvals[p];
            mvv = mvals[p];
            continue;
        }
        let (kc, mc) = (kvals[p], mvals[p]);
        for l in 0..f {
            let xv = x[l * n + c];
            w.kn[l] += kc * xv;
            w.mn[l] += mc * xv;
        }
    }
    let (zm, za) = (&ops.z_mass, &ops.z_stiff);
    for j in 0..f {
        let mut s = zm.diag[j] * w.kn[j] + za.diag[j] * w.mn[j];
        if j > 0 {
            s += zm.off[j - 1] * w.kn[j - 1] + za.off[j - 1] * w.mn[j - 1];
        }
        if j + 1 < f {
            s += zm.off[j] * w.kn[j + 1] + za.off[j] * w.mn[j + 1];
        }
        w.rhs[j] = b[j * n + v] - inv_d * s;
        w.diag[j] = inv_d * (zm.diag[j] * kvv + za.diag[j] * mvv);
        if j + 1 < f {
            w.off[j] = inv_d * (zm.off[j] * kvv + za.off[j] * mvv);
        }
    }
    w.rhs[0] -= w.mn[0] / tau;
    w.diag[0] += mvv / tau;
    let ok = thomas(&w.diag, &w.off, &mut w.rhs, &mut w.scratch);
    assert!(ok, "singular line block at vertex {v}");
    for j in 0..f {
        x[j * n + v] = w.rhs[j];
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Sparse direct solver with one cached factorization per step size.
pub struct DirectSolver {
    ops: OperatorSet,
    cache: Mutex<HashMap<u64, Arc<SparseFactor>>>,
    capacity: usize,
}

impl DirectSolver {
    pub fn new(ops: &OperatorSet) -> Self {
        DirectSolver {
            ops: ops.clone(),
            cache: Mutex::new(HashMap::new()),
            capacity: 64,
        }
    }

    fn factor(&self, tau: f64) -> Result<Arc<SparseFactor>> {
        let key = tau.to_bits();
        if let Some(f) = self.cache.lock().get(&key) {
            return Ok(f.clone());
        }
        let factor = Arc::new(SparseFactor::new(&self.ops.block(tau)?.ops.block_csr(Some(tau), 0))?);
        let mut cache = self.cache.lock();
        if cache.len() >= self.capacity {
            cache.clear();
        }
        cache.insert(key, factor.clone());
        Ok(factor)
    }
}

impl BlockSolver for DirectSolver {
    fn solve(&self, tau: f64, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let dim = self.ops.block_dim();
        if rhs.len() != dim {
            return Err(Error::Dimension { expected: dim, got: rhs.len() });
        }
        let x = self.factor(tau)?.solve(rhs);
        let mut r = vec![0.0; dim];
        self.ops.block(tau)?.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        Ok((
            x,
            SolveStats {
                iterations: 1,
                initial_residual: norm(rhs),
                final_residual: norm(&r),
                converged: true,
            },
        ))
    }
}
