mod common;

use std::num::NonZeroUsize;

use approx::assert_relative_eq;
use common::{small_setup, rel, setup};
use fracmgrit_core::assembly::*;
use fracmgrit_core::mesh::{build_spatial_mesh, build_zmesh, DomainTag};
use fracmgrit_core::quadrature::TriangleRule;
use gauss_quad::GaussJacobi;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

/// `int_a^b z^beta g(z) dz` by Gauss-Jacobi rules anchored at zero.
fn weighted_quadrature(a: f64, b: f64, beta: f64, g: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussJacobi::new(
        NonZeroUsize::new(8).unwrap(),
        0.0.try_into().unwrap(),
        beta.try_into().unwrap(),
    );
    let from_zero = |x: f64| (x / 2.0).powf(beta) * rule.integrate(0.0, x, &g);
    from_zero(b) - if a > 0.0 { from_zero(a) } else { 0.0 }
}

proptest! {
    #[test]
    fn gamma_recurrence(x in 0.1f64..2.0) {
        prop_assert!(rel(gamma(x + 1.0), x * gamma(x)) < 1e-12);
    }
}

#[test]
fn normalization_limits() {
    assert_relative_eq!(normalization_constant(1.0).unwrap(), 1.0, max_relative = 1e-14);
    assert!(normalization_constant(0.0).is_err());
    assert!(normalization_constant(2.0).is_err());
}

#[test]
fn weighted_entries_match_gauss_jacobi() {
    for alpha in [0.2, 0.6, 1.0, 1.4, 1.9] {
        let beta = 1.0 - alpha;
        let z = build_zmesh(8, alpha, 1.0).unwrap();
        for l in 1..z.nodes.len() {
            let (a, b) = (z.nodes[l - 1], z.nodes[l]);
            let h = b - a;
            let (mass, stiff) = weighted_element(a, b, beta);
            let left = |x: f64| (b - x) / h;
            let right = |x: f64| (x - a) / h;
            let expect = [
                [
                    weighted_quadrature(a, b, beta, |x| left(x) * left(x)),
                    weighted_quadrature(a, b, beta, |x| left(x) * right(x)),
                ],
                [
                    weighted_quadrature(a, b, beta, |x| right(x) * left(x)),
                    weighted_quadrature(a, b, beta, |x| right(x) * right(x)),
                ],
            ];
            for p in 0..2 {
                for q in 0..2 {
                    assert!(rel(mass[p][q], expect[p][q]) < 1e-10, "alpha {alpha} interval {l}");
                }
            }
            let ks = weighted_quadrature(a, b, beta, |_| 1.0 / (h * h));
            assert!(rel(stiff, ks) < 1e-10);
        }
    }
}

#[test]
fn z_matrices_symmetric_positive_definite() {
    for alpha in [0.4, 1.0, 1.6] {
        let z = build_zmesh(16, alpha, 1.0).unwrap();
        let (m, a) = assemble_z(&z, 1.0 - alpha).unwrap();
        assert!(m.min_eigenvalue() > 0.0);
        assert!(a.min_eigenvalue() > 0.0);
    }
    let z = build_zmesh(4, 1.0, 1.0).unwrap();
    assert!(assemble_z(&z, 1.0).is_err());
}

#[test]
fn block_operator_symmetric_and_positive() {
    let s = small_setup(2, 0.7, 8);
    assert_eq!((s.ops.n(), s.ops.f()), (9, 8));
    let b = s.ops.block(1e-3).unwrap();
    let dim = b.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for _ in 0..100 {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut bx, mut by) = (vec![0.0; dim], vec![0.0; dim]);
        b.apply(&x, &mut bx);
        b.apply(&y, &mut by);
        let (l, r) = (dot(&bx, &y), dot(&x, &by));
        assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(1.0));
        assert!(dot(&bx, &x) > 0.0);
    }
    assert!(s.ops.block(0.0).is_err());
    assert!(s.ops.block(-1.0).is_err());
}

#[test]
fn trace_operator_spd_with_growing_top_spectrum() {
    let mut top = 0.0;
    for level in 1..=3 {
        let s = setup(level, 1.0);
        let q = schur_complement(&s.ops).unwrap();
        let asym = (&q - q.transpose()).amax();
        assert!(asym <= 1e-12 * q.amax());
        assert!(SymmetricEigen::new(q.clone()).eigenvalues.min() > 0.0);
        let spec = s.spectrum();
        assert!(spec.sigma[0] > 0.0);
        let largest = *spec.sigma.last().unwrap();
        assert!(largest > top, "level {level}: {largest} <= {top}");
        top = largest;
    }
}

#[test]
fn lowest_mode_near_fractional_eigenvalue() {
    // The discrete trace operator approximates the fractional Laplacian,
    // whose lowest Dirichlet eigenvalue on the unit square is (2 pi^2)^{a/2}.
    for alpha in [0.4, 1.0, 1.6] {
        let s = setup(4, alpha);
        let low = s.spectrum().sigma[0];
        let exact = fracmgrit_core::problem::eigen_factor(alpha);
        assert!(rel(low, exact) < 0.05, "alpha {alpha}: {low} vs {exact}");
    }
}

#[test]
fn load_vector_limits() {
    let mesh = build_spatial_mesh(DomainTag::LShape, 2).unwrap();
    let rule = TriangleRule::collapsed(3);
    assert!(assemble_load(&mesh, &rule, |_, _| 0.0).iter().all(|&v| v == 0.0));
    // Constant forcing integrates the hat functions exactly.
    let ones = assemble_load(&mesh, &rule, |_, _| 1.0);
    let (mass, _) = assemble_spatial(&mesh).unwrap();
    for (i, row) in mass.outer_iterator().enumerate() {
        let boundary_free: f64 = row.iter().map(|(_, v)| *v).sum();
        assert!(ones[i] >= boundary_free - 1e-14);
    }
}
