//! Finite element matrices for the extended problem.
//!
//! Unknowns of the tensor-product space are laid out slab by slab in the
//! extended direction: entry `j * n + i` belongs to spatial vertex `i` and
//! extended node `z_j`, so the trace (`z = 0`) occupies the first `n` entries.
//! The per-step operator is
//!
//! ```text
//! B(tau) = (1/tau) E00 (x) M_time + M_z (x) A_s + A_z (x) M_s
//! ```
//!
//! where `M_time` is the unscaled spatial mass matrix and `A_s`, `M_s` carry
//! the factor `1/d_alpha`.

use nalgebra::{DMatrix, DVector};
use sprs::{CsMat, FillInReduction, SymmetryCheck, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::error::{invalid, Error, Result};
use crate::mesh::{SpatialMesh, ZMesh};
use crate::quadrature::TriangleRule;
use crate::tridiag::SymTridiag;

/// `d_alpha = 2^(1-alpha) Gamma(1 - alpha/2) / Gamma(alpha/2)`.
pub fn normalization_constant(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(invalid("alpha", format!("{alpha} is outside (0, 2)")));
    }
    let beta = 1.0 - alpha;
    Ok(2f64.powf(beta) * statrs::function::gamma::gamma(1.0 - alpha / 2.0)
        / statrs::function::gamma::gamma(alpha / 2.0))
}

/// Symmetric sparsity pattern shared by the spatial mass and stiffness
/// matrices, so both can be traversed with a single index walk.
fn spatial_pattern(mesh: &SpatialMesh, dofs: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dofs];
    for t in &mesh.triangles {
        for &a in t {
            if a >= dofs {
                continue;
            }
            for &b in t {
                if b < dofs {
                    rows[a].push(b);
                }
            }
        }
    }
    let mut indptr = Vec::with_capacity(dofs + 1);
    let mut indices = Vec::new();
    indptr.push(0);
    for r in rows.iter_mut() {
        r.sort_unstable();
        r.dedup();
        indices.extend_from_slice(r);
        indptr.push(indices.len());
    }
    (indptr, indices)
}

/// P1 element matrices `(mass, stiffness)` of a triangle.
pub fn p1_element(p: [[f64; 2]; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3], f64) {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * area2;
    // Gradients of the barycentric coordinates times 2|T|.
    let g = [
        [p[1][1] - p[2][1], p[2][0] - p[1][0]],
        [p[2][1] - p[0][1], p[0][0] - p[2][0]],
        [p[0][1] - p[1][1], p[1][0] - p[0][0]],
    ];
    let mut mass = [[0.0; 3]; 3];
    let mut stiff = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            mass[a][b] = area / 12.0 * if a == b { 2.0 } else { 1.0 };
            stiff[a][b] = (g[a][0] * g[b][0] + g[a][1] * g[b][1]) / (4.0 * area);
        }
    }
    (mass, stiff, area)
}

/// Raw P1 mass and stiffness matrices on the first `dofs` vertices.
fn assemble_p1(mesh: &SpatialMesh, dofs: usize) -> Result<(CsMat<f64>, CsMat<f64>)> {
    let (indptr, indices) = spatial_pattern(mesh, dofs);
    let mut mass = vec![0.0; indices.len()];
    let mut stiff = vec![0.0; indices.len()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let p = [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]];
        let (me, ke, area) = p1_element(p);
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle { index: ti, area });
        }
        for a in 0..3 {
            let r = t[a];
            if r >= dofs {
                continue;
            }
            let row = &indices[indptr[r]..indptr[r + 1]];
            for b in 0..3 {
                let c = t[b];
                if c >= dofs {
                    continue;
                }
                let k = indptr[r] + row.binary_search(&c).unwrap();
                mass[k] += me[a][b];
                stiff[k] += ke[a][b];
            }
        }
    }
    let m = CsMat::new((dofs, dofs), indptr.clone(), indices.clone(), mass);
    let k = CsMat::new((dofs, dofs), indptr, indices, stiff);
    Ok((m, k))
}

/// Unweighted P1 mass and stiffness matrices on the interior vertices.
pub fn assemble_spatial(mesh: &SpatialMesh) -> Result<(CsMat<f64>, CsMat<f64>)> {
    assemble_p1(mesh, mesh.n_interior)
}

/// Same as [`assemble_spatial`] but over all vertices, before boundary
/// elimination.
pub fn assemble_spatial_all(mesh: &SpatialMesh) -> Result<(CsMat<f64>, CsMat<f64>)> {
    assemble_p1(mesh, mesh.n_vertices())
}

/// Exact weighted integrals on `[a, b]` for the two hat functions:
/// returns `(mass, stiffness)` where `mass[p][q] = int z^beta psi_p psi_q`.
pub fn weighted_element(a: f64, b: f64, beta: f64) -> ([[f64; 2]; 2], f64) {
    let h = b - a;
    let moment = |p: f64| {
        let e = beta + p + 1.0;
        (b.powf(e) - if a > 0.0 { a.powf(e) } else { 0.0 }) / e
    };
    let (i0, i1, i2) = (moment(0.0), moment(1.0), moment(2.0));
    let h2 = h * h;
    let ll = (b * b * i0 - 2.0 * b * i1 + i2) / h2;
    let rr = (a * a * i0 - 2.0 * a * i1 + i2) / h2;
    let lr = (-a * b * i0 + (a + b) * i1 - i2) / h2;
    ([[ll, lr], [lr, rr]], i0 / h2)
}

/// Weighted mass and stiffness in the extended direction over the free nodes
/// `z_0 .. z_{M-1}`; `z_M` carries the homogeneous Dirichlet condition.
pub fn assemble_z(zmesh: &ZMesh, beta: f64) -> Result<(SymTridiag, SymTridiag)> {
    if !(beta > -1.0 && beta < 1.0) {
        return Err(invalid("beta", format!("{beta} is outside (-1, 1)")));
    }
    let f = zmesh.intervals;
    let mut md = vec![0.0; f];
    let mut mo = vec![0.0; f - 1];
    let mut ad = vec![0.0; f];
    let mut ao = vec![0.0; f - 1];
    for l in 1..=f {
        let (me, ke) = weighted_element(zmesh.nodes[l - 1], zmesh.nodes[l], beta);
        let (left, right) = (l - 1, l);
        md[left] += me[0][0];
        ad[left] += ke;
        if right < f {
            md[right] += me[1][1];
            ad[right] += ke;
            mo[left] += me[0][1];
            ao[left] -= ke;
        }
    }
    Ok((SymTridiag::new(md, mo), SymTridiag::new(ad, ao)))
}

/// All matrices of the fully discrete extension problem.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// Unscaled spatial mass; also the time-derivative mass.
    pub mass_raw: CsMat<f64>,
    pub stiff_raw: CsMat<f64>,
    /// `mass_raw / d_alpha`
    pub mass: CsMat<f64>,
    /// `stiff_raw / d_alpha`
    pub stiff: CsMat<f64>,
    pub z_mass: SymTridiag,
    pub z_stiff: SymTridiag,
    pub d_alpha: f64,
    pub alpha: f64,
}

impl OperatorSet {
    pub fn new(mesh: &SpatialMesh, zmesh: &ZMesh, alpha: f64) -> Result<Self> {
        let d_alpha = normalization_constant(alpha)?;
        let (mass_raw, stiff_raw) = assemble_spatial(mesh)?;
        let (z_mass, z_stiff) = assemble_z(zmesh, 1.0 - alpha)?;
        Ok(Self::from_parts(mass_raw, stiff_raw, z_mass, z_stiff, alpha, d_alpha))
    }

    pub fn from_parts(
        mass_raw: CsMat<f64>,
        stiff_raw: CsMat<f64>,
        z_mass: SymTridiag,
        z_stiff: SymTridiag,
        alpha: f64,
        d_alpha: f64,
    ) -> Self {
        let mass = mass_raw.map(|v| v / d_alpha);
        let stiff = stiff_raw.map(|v| v / d_alpha);
        OperatorSet {
            mass_raw,
            stiff_raw,
            mass,
            stiff,
            z_mass,
            z_stiff,
            d_alpha,
            alpha,
        }
    }

    /// Number of spatial (trace) unknowns.
    pub fn n(&self) -> usize {
        self.mass_raw.rows()
    }

    /// Number of free extended-direction nodes.
    pub fn f(&self) -> usize {
        self.z_mass.len()
    }

    pub fn block_dim(&self) -> usize {
        self.n() * self.f()
    }

    pub fn block(&self, tau: f64) -> Result<BlockOperator<'_>> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("time step {tau} must be positive")));
        }
        Ok(BlockOperator { ops: self, tau })
    }

    /// Explicit sparse form of the block operator restricted to the slabs
    /// `first_slab..F`. The time term is included when `tau` is given and the
    /// trace slab is part of the range.
    pub fn block_csr(&self, tau: Option<f64>, first_slab: usize) -> CsMat<f64> {
        let n = self.n();
        let f = self.f();
        let slabs = f - first_slab;
        let mut tri = TriMat::new((slabs * n, slabs * n));
        let (mt, k) = (&self.mass_raw, &self.stiff_raw);
        let inv_d = 1.0 / self.d_alpha;
        for j in first_slab..f {
            for l in j.saturating_sub(1)..(j + 2).min(f) {
                if l < first_slab {
                    continue;
                }
                let (mz, az) = (self.z_mass.get(j, l), self.z_stiff.get(j, l));
                let time = match tau {
                    Some(t) if j == 0 && l == 0 => 1.0 / t,
                    _ => 0.0,
                };
                for (r, row) in mt.outer_iterator().enumerate() {
                    let krow = k.outer_view(r).unwrap();
                    for ((c, &mv), (_, &kv)) in row.iter().zip(krow.iter()) {
                        let v = time * mv + inv_d * (mz * kv + az * mv);
                        tri.add_triplet((j - first_slab) * n + r, (l - first_slab) * n + c, v);
                    }
                }
            }
        }
        tri.to_csr()
    }
}

/// Matrix-free view of `B(tau)`.
#[derive(Debug, Clone, Copy)]
pub struct BlockOperator<'a> {
    pub ops: &'a OperatorSet,
    pub tau: f64,
}

impl BlockOperator<'_> {
    pub fn dim(&self) -> usize {
        self.ops.block_dim()
    }

    /// `y = B(tau) x` through the Kronecker structure.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ops = self.ops;
        let (n, f) = (ops.n(), ops.f());
        assert_eq!(x.len(), n * f);
        let mut kx = vec![0.0; n * f];
        let mut mx = vec![0.0; n * f];
        for l in 0..f {
            spmv(&ops.stiff_raw, &x[l * n..(l + 1) * n], &mut kx[l * n..(l + 1) * n]);
            spmv(&ops.mass_raw, &x[l * n..(l + 1) * n], &mut mx[l * n..(l + 1) * n]);
        }
        let inv_d = 1.0 / ops.d_alpha;
        for j in 0..f {
            let yj = &mut y[j * n..(j + 1) * n];
            yj.fill(0.0);
            for l in j.saturating_sub(1)..(j + 2).min(f) {
                let mz = ops.z_mass.get(j, l) * inv_d;
                let az = ops.z_stiff.get(j, l) * inv_d;
                for i in 0..n {
                    yj[i] += mz * kx[l * n + i] + az * mx[l * n + i];
                }
            }
            if j == 0 {
                for i in 0..n {
                    yj[i] += mx[i] / self.tau;
                }
            }
        }
    }
}

/// `y = A x` for a CSR matrix.
pub fn spmv(a: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    let indptr = a.indptr();
    let idx = a.indices();
    let data = a.data();
    let ptr = indptr.raw_storage();
    for r in 0..a.rows() {
        let mut s = 0.0;
        for k in ptr[r]..ptr[r + 1] {
            s += data[k] * x[idx[k]];
        }
        y[r] = s;
    }
}

/// Cached sparse LDL^T factorization.
pub struct SparseFactor {
    ldl: LdlNumeric<f64, usize>,
}

impl SparseFactor {
    pub fn new(mat: &CsMat<f64>) -> Result<Self> {
        let ldl = Ldl::new()
            .check_symmetry(SymmetryCheck::DontCheckSymmetry)
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .numeric(mat.view())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        if ldl.d().iter().any(|&d| !(d > 0.0)) {
            return Err(Error::NotSpd("nonpositive pivot in LDL^T".into()));
        }
        Ok(SparseFactor { ldl })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.ldl.solve(&rhs.to_vec())
    }

    pub fn nnz(&self) -> usize {
        self.ldl.nnz()
    }
}

/// Upper limit on factor entries before a dense trace operator is refused.
pub const SCHUR_FILL_LIMIT: usize = 60_000_000;

/// Dense trace operator
/// `Q_s = K_00 - C^T K_11^{-1} C`, where `K = M_z (x) A_s + A_z (x) M_s`,
/// `K_00` is its trace block and `C` couples the trace to the first interior
/// slab (the only nonzero coupling since the extended matrices are
/// tridiagonal).
pub fn schur_complement(ops: &OperatorSet) -> Result<DMatrix<f64>> {
    let n = ops.n();
    let f = ops.f();
    let inv_d = 1.0 / ops.d_alpha;
    let k00 = combine(ops, ops.z_mass.diag[0] * inv_d, ops.z_stiff.diag[0] * inv_d);
    if f == 1 {
        return Ok(k00);
    }
    let coupling = combine(ops, ops.z_mass.off[0] * inv_d, ops.z_stiff.off[0] * inv_d);
    let interior = ops.block_csr(None, 1);
    let factor = SparseFactor::new(&interior)?;
    if factor.nnz() > SCHUR_FILL_LIMIT {
        return Err(Error::ResourceGuard(format!(
            "interior factor has {} entries",
            factor.nnz()
        )));
    }
    let mut q = k00;
    let mut rhs = vec![0.0; (f - 1) * n];
    for c in 0..n {
        rhs.fill(0.0);
        rhs[..n].copy_from_slice(coupling.column(c).as_slice());
        let y = factor.solve(&rhs);
        let yc = DVector::from_column_slice(&y[..n]);
        let corr = coupling.transpose() * yc;
        for r in 0..n {
            q[(r, c)] -= corr[r];
        }
    }
    // Remove the rounding asymmetry of the column-wise construction.
    let qt = q.transpose();
    Ok((q + qt) * 0.5)
}

/// Dense `a * A_raw + b * M_raw`.
fn combine(ops: &OperatorSet, a: f64, b: f64) -> DMatrix<f64> {
    let n = ops.n();
    let mut out = DMatrix::zeros(n, n);
    for (r, row) in ops.stiff_raw.outer_iterator().enumerate() {
        for (c, &v) in row.iter() {
            out[(r, c)] += a * v;
        }
    }
    for (r, row) in ops.mass_raw.outer_iterator().enumerate() {
        for (c, &v) in row.iter() {
            out[(r, c)] += b * v;
        }
    }
    out
}

/// Dense copy of a CSR matrix.
pub fn to_dense(a: &CsMat<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.rows(), a.cols());
    for (r, row) in a.outer_iterator().enumerate() {
        for (c, &v) in row.iter() {
            out[(r, c)] += v;
        }
    }
    out
}

/// Load vector `<f(., t), phi_i>` on the interior vertices.
pub fn assemble_load(
    mesh: &SpatialMesh,
    rule: &TriangleRule,
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let n = mesh.n_interior;
    let mut out = vec![0.0; n];
    for t in &mesh.triangles {
        if t.iter().all(|&v| v >= n) {
            continue;
        }
        let p = [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]];
        for a in 0..3 {
            if t[a] >= n {
                continue;
            }
            let (pa, pb, pc) = (p[a], p[(a + 1) % 3], p[(a + 2) % 3]);
            // Hat function of vertex `a` in barycentric form.
            let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
            let hat = |x: f64, y: f64| {
                ((pb[0] - x) * (pc[1] - y) - (pc[0] - x) * (pb[1] - y)) / det
            };
            out[t[a]] += rule.integrate(p, |x, y| f(x, y) * hat(x, y));
        }
    }
    out
}
