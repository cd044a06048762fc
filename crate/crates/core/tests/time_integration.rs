mod common;

use common::{setup, Setup};
use fracmgrit_core::assembly::{schur_complement, to_dense};
use fracmgrit_core::mesh::{build_temporal_grid, GridKind, TemporalGrid};
use fracmgrit_core::mgrit::*;
use fracmgrit_core::problem::{mode, Forcing};
use fracmgrit_core::timestepping::{sequential_solve, Propagator};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mass_norm(s: &Setup, u: &[f64]) -> f64 {
    let m = to_dense(&s.ops.mass_raw);
    let v = DVector::from_column_slice(u);
    v.dot(&(&m * &v)).sqrt()
}

fn random_states(n: usize, points: usize, psi0: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = vec![psi0.to_vec()];
    for _ in 1..points {
        u.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    u
}

fn row_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn opts(relaxation: Relaxation, m: usize) -> MgritOptions {
    MgritOptions {
        relaxation,
        coarsening: vec![m],
        ..Default::default()
    }
}

#[test]
fn step_contracts_in_mass_norm() {
    let s = setup(2, 0.6);
    let p = s.trace_propagator();
    let u: Vec<f64> = (0..s.ops.n()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    for tau in [1e-4, 1e-2, 1.0] {
        let v = p.step(&u, tau, None).unwrap();
        assert!(mass_norm(&s, &v) < mass_norm(&s, &u));
    }
}

#[test]
fn stepping_equals_composed_product() {
    let s = setup(2, 1.3);
    let p = s.trace_propagator();
    let q = schur_complement(&s.ops).unwrap();
    let m = to_dense(&s.ops.mass_raw);
    let steps = [0.01, 0.03, 0.02, 0.05];
    let mut prod = DMatrix::identity(s.ops.n(), s.ops.n());
    for &tau in &steps {
        let a = &m + &q * tau;
        prod = a.lu().solve(&(&m * prod)).unwrap();
    }
    let u0: Vec<f64> = (0..s.ops.n()).map(|i| (i as f64).sin()).collect();
    let mut u = u0.clone();
    for &tau in &steps {
        u = p.step(&u, tau, None).unwrap();
    }
    let expect = &prod * DVector::from_column_slice(&u0);
    let err = (DVector::from_column_slice(&u) - &expect).amax();
    assert!(err <= 1e-12 * expect.amax());
}

#[test]
fn symmetrized_propagator_is_symmetric() {
    let s = setup(2, 0.9);
    let q = schur_complement(&s.ops).unwrap();
    let m = to_dense(&s.ops.mass_raw);
    let eig = SymmetricEigen::new(m.clone());
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let a = &m + &q * 0.05;
    let inv = a.try_inverse().unwrap();
    let sym = &root * inv * &root;
    assert!((&sym - sym.transpose()).amax() <= 1e-12 * sym.amax());
}

#[test]
fn steady_forcing_keeps_mode_within_spatial_error() {
    let s = setup(3, 1.0);
    let p = s.trace_propagator();
    let forcing = Forcing::steady(&s.mesh, 1.0);
    let u0 = s.mesh.interpolate(mode);
    // Discrete steady state: Q u = load.
    let q = schur_complement(&s.ops).unwrap();
    let load = forcing.at(0.0).unwrap();
    let ustar = q.lu().solve(&DVector::from_vec(load)).unwrap();
    let e0: Vec<f64> = u0.iter().zip(ustar.iter()).map(|(a, b)| a - b).collect();
    let gap = mass_norm(&s, &e0);
    assert!(gap < 0.05 * mass_norm(&s, &u0));
    for n in [10, 40, 160] {
        let grid = build_temporal_grid(GridKind::Uniform, n, 1.0, 1).unwrap();
        let traj = sequential_solve(&p, &u0, &grid, &forcing).unwrap();
        let drift: Vec<f64> = traj.last().iter().zip(&u0).map(|(a, b)| a - b).collect();
        assert!(mass_norm(&s, &drift) <= 2.0 * gap, "N = {n}");
    }
}

struct Case {
    s: Setup,
    p: Propagator,
    psi0: Vec<f64>,
    forcing: Forcing,
}

fn case(level: u32, alpha: f64) -> Case {
    let s = setup(level, alpha);
    let p = s.trace_propagator();
    let psi0 = s.mesh.interpolate(mode);
    let forcing = Forcing::manufactured(&s.mesh, alpha);
    Case { s, p, psi0, forcing }
}

#[test]
fn relaxation_residual_patterns() {
    let c = case(2, 1.0);
    let grid = build_temporal_grid(GridKind::Graded { exponent: 2.5 }, 32, 1.0, 4).unwrap();
    let o = opts(Relaxation::Fcf, 4);
    let sys = SpaceTimeSystem::new(&c.p, &grid, &c.forcing, &o).unwrap();
    let mut u = random_states(c.s.ops.n(), 33, &c.psi0, 3);
    sys.f_relax(0, &mut u, None).unwrap();
    let r = sys.residual(&u, &c.psi0).unwrap();
    for (i, row) in r.iter().enumerate() {
        if i % 4 != 0 {
            assert!(row_norm(row) <= 1e-12, "F-row {i}");
        }
    }
    let before = u.clone();
    sys.f_relax(0, &mut u, None).unwrap();
    assert_eq!(before, u);

    sys.c_relax(0, &mut u, None).unwrap();
    let r = sys.residual(&u, &c.psi0).unwrap();
    for (i, row) in r.iter().enumerate() {
        if i % 4 == 0 {
            assert!(row_norm(row) <= 1e-12, "C-row {i}");
        }
    }
    assert!(r.iter().enumerate().any(|(i, row)| i % 4 != 0 && row_norm(row) > 1e-6));
}

#[test]
fn exact_solution_is_a_fixed_point() {
    let c = case(2, 0.5);
    let grid = build_temporal_grid(GridKind::Uniform, 16, 1.0, 4).unwrap();
    let o = opts(Relaxation::Fcf, 4);
    let sys = SpaceTimeSystem::new(&c.p, &grid, &c.forcing, &o).unwrap();
    let exact = sequential_solve(&c.p, &c.psi0, &grid, &c.forcing).unwrap();
    let mut u = exact.states.clone();
    sys.f_relax(0, &mut u, None).unwrap();
    sys.c_relax(0, &mut u, None).unwrap();
    assert_eq!(u, exact.states);
}

#[test]
fn single_interval_reduces_to_sequential() {
    let c = case(2, 1.0);
    let grid = build_temporal_grid(GridKind::Uniform, 8, 0.5, 8).unwrap();
    let exact = sequential_solve(&c.p, &c.psi0, &grid, &c.forcing).unwrap();
    let o = opts(Relaxation::F, 8);
    let sys = SpaceTimeSystem::new(&c.p, &grid, &c.forcing, &o).unwrap();
    let mut u = random_states(c.s.ops.n(), 9, &c.psi0, 11);
    sys.f_relax(0, &mut u, None).unwrap();
    sys.c_relax(0, &mut u, None).unwrap();
    assert_eq!(u, exact.states);

    for relax in [Relaxation::F, Relaxation::Fcf] {
        let (traj, stats) = solve(&c.p, &grid, &c.forcing, &c.psi0, &opts(relax, 8)).unwrap();
        assert!(stats.converged);
        assert_eq!(stats.iterations, 1);
        assert!(traj.max_difference(&exact) < 1e-12);
    }
}

#[test]
fn ideal_coarse_operator_converges_in_one_cycle() {
    let c = case(2, 1.4);
    for kind in [GridKind::Uniform, GridKind::Graded { exponent: 2.5 }] {
        let grid = build_temporal_grid(kind, 64, 1.0, 4).unwrap();
        for relax in [Relaxation::F, Relaxation::Fcf] {
            let o = MgritOptions {
                coarse: CoarseOperator::Ideal,
                ..opts(relax, 4)
            };
            let (_, stats) = solve(&c.p, &grid, &c.forcing, &c.psi0, &o).unwrap();
            assert_eq!(stats.iterations, 1);
            assert!(stats.residuals[1] <= 1e-10 * stats.residuals[0]);
        }
    }
}

#[test]
fn converged_iterate_matches_sequential() {
    let c = case(2, 0.8);
    for (kind, levels) in [
        (GridKind::Uniform, 2),
        (GridKind::Graded { exponent: 2.5 }, 2),
        (GridKind::Uniform, 3),
    ] {
        let grid = build_temporal_grid(kind, 128, 1.0, 4).unwrap();
        let exact = sequential_solve(&c.p, &c.psi0, &grid, &c.forcing).unwrap();
        for relax in [Relaxation::F, Relaxation::Fcf] {
            let o = MgritOptions {
                levels,
                ..opts(relax, 4)
            };
            let (traj, stats) = solve(&c.p, &grid, &c.forcing, &c.psi0, &o).unwrap();
            assert!(stats.converged);
            assert!(*stats.residuals.last().unwrap() < 1e-8);
            assert!(traj.max_difference(&exact) <= 1e-6);
            // After the final F-relaxation the residual lives on C-rows only.
            let sys = SpaceTimeSystem::new(&c.p, &grid, &c.forcing, &o).unwrap();
            let r = sys.residual(&traj.states, &c.psi0).unwrap();
            for (i, row) in r.iter().enumerate() {
                if i % 4 != 0 {
                    assert!(row_norm(row) <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn observed_factor_is_largest_ratio() {
    let c = case(2, 1.0);
    let grid = build_temporal_grid(GridKind::Uniform, 64, 1.0, 4).unwrap();
    let (_, stats) = solve(&c.p, &grid, &c.forcing, &c.psi0, &opts(Relaxation::Fcf, 4)).unwrap();
    let ratios: Vec<f64> = stats.residuals.windows(2).map(|w| w[1] / w[0]).collect();
    assert_eq!(stats.iterations, ratios.len());
    assert_eq!(stats.rho_observed, ratios.iter().copied().fold(0.0, f64::max));
    assert!(stats.residuals.iter().all(|r| r.is_finite()));
}

#[test]
fn identical_seed_gives_identical_iterates() {
    let c = case(2, 1.0);
    let grid = build_temporal_grid(GridKind::Uniform, 64, 1.0, 4).unwrap();
    let o = MgritOptions {
        seed: 42,
        ..opts(Relaxation::Fcf, 4)
    };
    let (a, sa) = solve(&c.p, &grid, &c.forcing, &c.psi0, &o).unwrap();
    let (b, sb) = solve(&c.p, &grid, &c.forcing, &c.psi0, &o).unwrap();
    assert_eq!(sa.residuals, sb.residuals);
    assert_eq!(a.states, b.states);
    let (_, sc) = solve(&c.p, &grid, &c.forcing, &c.psi0, &MgritOptions { seed: 43, ..o }).unwrap();
    assert_ne!(sa.residuals[0], sc.residuals[0]);
}

#[test]
fn three_levels_converge() {
    let c = case(2, 1.0);
    let grid = build_temporal_grid(GridKind::Uniform, 1024, 1.0, 4).unwrap();
    let o = MgritOptions {
        levels: 3,
        ..opts(Relaxation::Fcf, 4)
    };
    let (_, stats) = solve(&c.p, &grid, &c.forcing, &c.psi0, &o).unwrap();
    assert!(stats.converged);
    assert!(stats.rho_observed < 1.0);
}

#[test]
fn fcf_not_slower_than_f() {
    let c = case(3, 1.0);
    let grid = build_temporal_grid(GridKind::Uniform, 256, 1.0, 4).unwrap();
    let (_, f) = solve(&c.p, &grid, &Forcing::Zero, &c.psi0, &opts(Relaxation::F, 4)).unwrap();
    let (_, fcf) = solve(&c.p, &grid, &Forcing::Zero, &c.psi0, &opts(Relaxation::Fcf, 4)).unwrap();
    assert!(fcf.rho_observed <= f.rho_observed + 0.05);
}

#[test]
fn invalid_hierarchies_rejected() {
    let c = case(1, 1.0);
    let grid = build_temporal_grid(GridKind::Uniform, 12, 1.0, 4).unwrap();
    let bad = |o: MgritOptions| SpaceTimeSystem::new(&c.p, &grid, &c.forcing, &o).is_err();
    assert!(bad(MgritOptions { levels: 1, ..opts(Relaxation::F, 4) }));
    assert!(bad(opts(Relaxation::F, 5)));
    assert!(bad(opts(Relaxation::F, 1)));
    assert!(bad(MgritOptions {
        levels: 3,
        coarse: CoarseOperator::Ideal,
        ..opts(Relaxation::F, 2)
    }));
    assert!(cf_split(1, 1).is_err());
    let g: TemporalGrid = build_temporal_grid(GridKind::Uniform, 16, 1.0, 4).unwrap();
    assert!(SpaceTimeSystem::new(&c.p, &g, &c.forcing, &MgritOptions { levels: 3, ..opts(Relaxation::F, 4) }).is_ok());
}
