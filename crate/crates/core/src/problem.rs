//! Manufactured solution `u = e^{-t} sin(pi x) sin(pi y)`, its forcing, and
//! error norms of discrete trace functions.

use std::f64::consts::PI;

use crate::assembly::assemble_load;
use crate::mesh::SpatialMesh;
use crate::quadrature::TriangleRule;

/// `(2 pi^2)^{alpha/2}`: the fractional power of the Laplacian eigenvalue of
/// `sin(pi x) sin(pi y)`.
pub fn eigen_factor(alpha: f64) -> f64 {
    (2.0 * PI * PI).powf(alpha / 2.0)
}

/// `f = (-1 + (2 pi^2)^{alpha/2}) e^{-t} sin(pi x) sin(pi y)`.
pub fn manufactured_forcing(alpha: f64, x: f64, y: f64, t: f64) -> f64 {
    (eigen_factor(alpha) - 1.0) * (-t).exp() * (PI * x).sin() * (PI * y).sin()
}

pub fn mode(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin()
}

pub fn mode_grad(x: f64, y: f64) -> [f64; 2] {
    [
        PI * (PI * x).cos() * (PI * y).sin(),
        PI * (PI * x).sin() * (PI * y).cos(),
    ]
}

/// Right-hand side of the semi-discrete problem as a function of time.
/// Every forcing used here separates as `load * e^{-decay t}`.
#[derive(Debug, Clone)]
pub enum Forcing {
    Zero,
    Separable { load: Vec<f64>, decay: f64 },
}

impl Forcing {
    /// Load vector of the manufactured problem.
    pub fn manufactured(mesh: &SpatialMesh, alpha: f64) -> Self {
        let rule = TriangleRule::collapsed(4);
        let scale = eigen_factor(alpha) - 1.0;
        let load = assemble_load(mesh, &rule, |x, y| scale * mode(x, y));
        Forcing::Separable { load, decay: 1.0 }
    }

    /// Forcing that keeps `sin(pi x) sin(pi y)` stationary.
    pub fn steady(mesh: &SpatialMesh, alpha: f64) -> Self {
        let rule = TriangleRule::collapsed(4);
        let scale = eigen_factor(alpha);
        let load = assemble_load(mesh, &rule, |x, y| scale * mode(x, y));
        Forcing::Separable { load, decay: 0.0 }
    }

    pub fn at(&self, t: f64) -> Option<Vec<f64>> {
        match self {
            Forcing::Zero => None,
            Forcing::Separable { load, decay } => {
                let s = (-decay * t).exp();
                Some(load.iter().map(|v| v * s).collect())
            }
        }
    }
}

/// `(L2, H1)` norms of `u_h - u` where `u_h` is the P1 function with the
/// given interior values and zero boundary values.
pub fn error_norms(
    mesh: &SpatialMesh,
    rule: &TriangleRule,
    values: &[f64],
    u: impl Fn(f64, f64) -> f64,
    grad: impl Fn(f64, f64) -> [f64; 2],
) -> (f64, f64) {
    let n = mesh.n_interior;
    assert_eq!(values.len(), n);
    let nodal = |v: usize| if v < n { values[v] } else { 0.0 };
    let mut l2 = 0.0;
    let mut semi = 0.0;
    for t in &mesh.triangles {
        let p = [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]];
        let w = [nodal(t[0]), nodal(t[1]), nodal(t[2])];
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        // Constant gradient of the P1 function.
        let gx = ((w[1] - w[0]) * (p[2][1] - p[0][1]) - (w[2] - w[0]) * (p[1][1] - p[0][1])) / det;
        let gy = ((w[2] - w[0]) * (p[1][0] - p[0][0]) - (w[1] - w[0]) * (p[2][0] - p[0][0])) / det;
        let uh = |x: f64, y: f64| w[0] + gx * (x - p[0][0]) + gy * (y - p[0][1]);
        l2 += rule.integrate(p, |x, y| (uh(x, y) - u(x, y)).powi(2));
        semi += rule.integrate(p, |x, y| {
            let g = grad(x, y);
            (gx - g[0]).powi(2) + (gy - g[1]).powi(2)
        });
    }
    (l2.sqrt(), (l2 + semi).sqrt())
}

/// H1 error against the manufactured solution at time `t`.
pub fn manufactured_errors(mesh: &SpatialMesh, rule: &TriangleRule, values: &[f64], t: f64) -> (f64, f64) {
    let s = (-t).exp();
    error_norms(mesh, rule, values, |x, y| s * mode(x, y), |x, y| {
        let g = mode_grad(x, y);
        [s * g[0], s * g[1]]
    })
}
