//! Quadrature on triangles by the collapsed (Duffy) product of Gauss-Legendre
//! rules.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Points in barycentric form `(l1, l2)` on the reference triangle
/// `{(x, y): x, y >= 0, x + y <= 1}`, with weights summing to 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Product rule with `q` points per direction; exact for polynomials of
    /// total degree `2q - 2`.
    pub fn collapsed(q: usize) -> Self {
        let gl = GaussLegendre::new(NonZeroUsize::new(q).expect("q >= 1"));
        let pairs: Vec<(f64, f64)> = gl
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        let mut points = Vec::with_capacity(q * q);
        let mut weights = Vec::with_capacity(q * q);
        for &(u, wu) in &pairs {
            for &(v, wv) in &pairs {
                points.push([u, (1.0 - u) * v]);
                weights.push(wu * wv * (1.0 - u));
            }
        }
        TriangleRule { points, weights }
    }

    /// Integrates `f(x, y)` over the triangle with the given vertices.
    pub fn integrate(&self, tri: [[f64; 2]; 3], mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let [a, b, c] = tri;
        let jac = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
        let mut s = 0.0;
        for (p, w) in self.points.iter().zip(&self.weights) {
            let x = a[0] + p[0] * (b[0] - a[0]) + p[1] * (c[0] - a[0]);
            let y = a[1] + p[0] * (b[1] - a[1]) + p[1] * (c[1] - a[1]);
            s += w * f(x, y);
        }
        s * jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_exact(i: i32, j: i32) -> f64 {
        // int_T x^i y^j = i! j! / (i + j + 2)!
        let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn exact_on_monomials() {
        let rule = TriangleRule::collapsed(4);
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for i in 0..=6 {
            for j in 0..=(6 - i) {
                let v = rule.integrate(tri, |x, y| x.powi(i) * y.powi(j));
                assert!((v - monomial_exact(i, j)).abs() < 1e-15, "x^{i} y^{j}");
            }
        }
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mapped_triangle_area() {
        let rule = TriangleRule::collapsed(3);
        let v = rule.integrate([[1.0, 1.0], [1.0, 3.0], [4.0, 1.0]], |_, _| 1.0);
        assert!((v - 3.0).abs() < 1e-14);
    }
}
