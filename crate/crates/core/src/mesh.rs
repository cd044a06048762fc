//! Spatial triangulations, the graded mesh in the extended direction, and
//! temporal grids with their coarse counterparts.
//!
//! Spatial meshes are structured: the domain is a union of unit cells, each
//! cell is cut into `2^k x 2^k` squares and every square is split along its
//! lower-left to upper-right diagonal. Vertices are numbered interior-first so
//! that dropping the boundary is a slice of the leading `n_interior` entries.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainTag {
    /// `(0,1)^2`
    UnitSquare,
    /// `(-1,1)^2 \ [0,1)^2`
    LShape,
}

impl DomainTag {
    /// Lower-left corner of the lattice and number of unit cells per side.
    fn frame(self) -> ([f64; 2], i64) {
        match self {
            DomainTag::UnitSquare => ([0.0, 0.0], 1),
            DomainTag::LShape => ([-1.0, -1.0], 2),
        }
    }

    /// Whether the unit cell with lower-left lattice corner `(cx, cy)` (in
    /// cell units) belongs to the domain.
    fn has_cell(self, cx: i64, cy: i64) -> bool {
        match self {
            DomainTag::UnitSquare => cx == 0 && cy == 0,
            DomainTag::LShape => (0..2).contains(&cx) && (0..2).contains(&cy) && !(cx == 1 && cy == 1),
        }
    }

    pub fn area(self) -> f64 {
        match self {
            DomainTag::UnitSquare => 1.0,
            DomainTag::LShape => 3.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::UnitSquare => "unit-square",
            DomainTag::LShape => "l-shape",
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-square" => Ok(DomainTag::UnitSquare),
            "l-shape" => Ok(DomainTag::LShape),
            other => Err(Error::UnsupportedDomain(other.to_string())),
        }
    }
}

/// Conforming structured triangulation of a polygonal domain.
#[derive(Debug, Clone)]
pub struct SpatialMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Integer lattice coordinates of each vertex (spacing `h`).
    pub lattice: Vec<[i64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub n_interior: usize,
    pub h: f64,
    pub level: u32,
    pub domain: DomainTag,
}

impl SpatialMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn interior_vertex_ids(&self) -> std::ops::Range<usize> {
        0..self.n_interior
    }

    pub fn boundary_vertex_ids(&self) -> std::ops::Range<usize> {
        self.n_interior..self.vertices.len()
    }

    pub fn is_interior(&self, v: usize) -> bool {
        v < self.n_interior
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Nodal interpolant of `f` on the interior vertices.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.vertices[..self.n_interior]
            .iter()
            .map(|p| f(p[0], p[1]))
            .collect()
    }

    /// Writes `id,x,y,boundary` records.
    pub fn write_vertices_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id,x,y,boundary")?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{},{:.16e},{:.16e},{}", i, p[0], p[1], u8::from(!self.is_interior(i)))?;
        }
        Ok(())
    }

    /// Writes `id,v0,v1,v2` records.
    pub fn write_triangles_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id,v0,v1,v2")?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{},{},{},{}", i, t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

pub fn build_spatial_mesh(domain: DomainTag, level: u32) -> Result<SpatialMesh> {
    if level == 0 {
        return Err(invalid("refinement", "refinement level must be at least 1"));
    }
    if level > 12 {
        return Err(invalid("refinement", format!("refinement level {level} is too large")));
    }
    let per_cell = 1i64 << level;
    let h = 1.0 / per_cell as f64;
    let (origin, cells) = domain.frame();
    let side = cells * per_cell;

    let square_in = |i: i64, j: i64| -> bool {
        i >= 0 && j >= 0 && i < side && j < side && domain.has_cell(i / per_cell, j / per_cell)
    };

    // A lattice point is a vertex if it touches an included square, and
    // interior iff all four surrounding squares are included.
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for j in 0..=side {
        for i in 0..=side {
            let around = [
                square_in(i - 1, j - 1),
                square_in(i, j - 1),
                square_in(i - 1, j),
                square_in(i, j),
            ];
            if around.iter().all(|&s| s) {
                interior.push([i, j]);
            } else if around.iter().any(|&s| s) {
                boundary.push([i, j]);
            }
        }
    }
    let n_interior = interior.len();
    let lattice: Vec<[i64; 2]> = interior.into_iter().chain(boundary).collect();
    let index: HashMap<[i64; 2], usize> = lattice.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let vertices = lattice
        .iter()
        .map(|&[i, j]| [origin[0] + i as f64 * h, origin[1] + j as f64 * h])
        .collect();

    let mut triangles = Vec::new();
    for j in 0..side {
        for i in 0..side {
            if !square_in(i, j) {
                continue;
            }
            let v00 = index[&[i, j]];
            let v10 = index[&[i + 1, j]];
            let v11 = index[&[i + 1, j + 1]];
            let v01 = index[&[i, j + 1]];
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    Ok(SpatialMesh {
        vertices,
        lattice,
        triangles,
        n_interior,
        h,
        level,
        domain,
    })
}

/// Graded partition of `[0, Z]`, refined towards `z = 0`.
#[derive(Debug, Clone)]
pub struct ZMesh {
    pub nodes: Vec<f64>,
    pub intervals: usize,
    pub truncation: f64,
    pub grading: f64,
    pub transition: f64,
    pub alpha: f64,
}

impl ZMesh {
    /// Spacing of interval `j` (1-based, `z_j - z_{j-1}`).
    pub fn spacing(&self, j: usize) -> f64 {
        self.nodes[j] - self.nodes[j - 1]
    }
}

/// Default number of extended-direction intervals for spatial spacing `h`:
/// `4 * ceil(1 / (2h))`.
pub fn default_z_intervals(h: f64) -> usize {
    4 * (1.0 / (2.0 * h)).ceil() as usize
}

pub fn build_zmesh(intervals: usize, alpha: f64, truncation: f64) -> Result<ZMesh> {
    if intervals == 0 || intervals % 4 != 0 {
        return Err(invalid(
            "z_intervals",
            format!("{intervals} is not a positive multiple of 4"),
        ));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(invalid("alpha", format!("{alpha} is outside (0, 2)")));
    }
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(invalid("truncation", format!("{truncation} must be positive")));
    }
    let grading = 3.0 / alpha + 0.01;
    let transition = 1.0 / (1.0 + grading / 3.0);
    let m = intervals as f64;
    let knee = 3 * intervals / 4;
    let nodes = (0..=intervals)
        .map(|j| {
            let jf = j as f64;
            if j <= knee {
                transition * truncation * (4.0 * jf / (3.0 * m)).powf(grading)
            } else {
                truncation * ((1.0 - transition) * (4.0 * jf / m - 3.0) + transition)
            }
        })
        .collect();
    Ok(ZMesh {
        nodes,
        intervals,
        truncation,
        grading,
        transition,
        alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    Uniform,
    /// `t_k = T (k/N)^exponent`
    Graded { exponent: f64 },
}

impl GridKind {
    pub fn label(&self) -> &'static str {
        match self {
            GridKind::Uniform => "uniform",
            GridKind::Graded { .. } => "graded",
        }
    }
}

/// Time points with step sizes and the coarse grid induced by a coarsening
/// factor `m`. Coarse steps are sums of the fine steps they cover.
#[derive(Debug, Clone)]
pub struct TemporalGrid {
    pub points: Vec<f64>,
    pub steps: Vec<f64>,
    pub kind: GridKind,
    pub coarsening: usize,
    pub coarse_points: Vec<f64>,
    pub coarse_steps: Vec<f64>,
}

impl TemporalGrid {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.coarse_steps.len()
    }

    pub fn final_time(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Step sizes `tau_j`, `j = 1..=N`, indexed from 1.
    pub fn tau(&self, j: usize) -> f64 {
        self.steps[j - 1]
    }

    /// Builds a grid from explicit step sizes starting at `t = 0`.
    pub fn from_steps(steps: Vec<f64>, kind: GridKind, coarsening: usize) -> Result<Self> {
        let n = steps.len();
        if n == 0 {
            return Err(invalid("time_steps", "at least one step is required"));
        }
        if let Some(bad) = steps.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(invalid("time_steps", format!("non-positive step size {bad}")));
        }
        if coarsening == 0 || n % coarsening != 0 {
            return Err(invalid(
                "coarsening",
                format!("m = {coarsening} does not divide N = {n}"),
            ));
        }
        let mut points = Vec::with_capacity(n + 1);
        points.push(0.0);
        let mut t = 0.0;
        for &s in &steps {
            t += s;
            points.push(t);
        }
        Ok(Self::assemble(points, steps, kind, coarsening))
    }

    fn assemble(points: Vec<f64>, steps: Vec<f64>, kind: GridKind, m: usize) -> Self {
        let coarse_points = points.iter().step_by(m).copied().collect();
        let coarse_steps = steps.chunks(m).map(|c| c.iter().sum()).collect();
        TemporalGrid {
            points,
            steps,
            kind,
            coarsening: m,
            coarse_points,
            coarse_steps,
        }
    }

    /// The coarse grid as a grid of its own, to be coarsened again by `m`.
    pub fn coarsen(&self, m: usize) -> Result<TemporalGrid> {
        let mut g = TemporalGrid::from_steps(self.coarse_steps.clone(), self.kind, m)?;
        g.points = self.coarse_points.clone();
        g.coarse_points = g.points.iter().step_by(m).copied().collect();
        Ok(g)
    }
}

pub fn build_temporal_grid(
    kind: GridKind,
    n: usize,
    final_time: f64,
    coarsening: usize,
) -> Result<TemporalGrid> {
    if n == 0 {
        return Err(invalid("time_steps", "N must be positive"));
    }
    if !(final_time > 0.0 && final_time.is_finite()) {
        return Err(invalid("final_time", format!("{final_time} must be positive")));
    }
    if coarsening == 0 || n % coarsening != 0 {
        return Err(invalid(
            "coarsening",
            format!("m = {coarsening} does not divide N = {n}"),
        ));
    }
    let nf = n as f64;
    let points: Vec<f64> = match kind {
        GridKind::Uniform => (0..=n).map(|k| final_time * k as f64 / nf).collect(),
        GridKind::Graded { exponent } => {
            if !(exponent >= 1.0) {
                return Err(invalid("grading", format!("exponent {exponent} must be >= 1")));
            }
            (0..=n)
                .map(|k| final_time * (k as f64 / nf).powf(exponent))
                .collect()
        }
    };
    let steps = match kind {
        GridKind::Uniform => vec![final_time / nf; n],
        GridKind::Graded { .. } => points.windows(2).map(|w| w[1] - w[0]).collect(),
    };
    Ok(TemporalGrid::assemble(points, steps, kind, coarsening))
}
