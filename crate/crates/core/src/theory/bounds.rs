use rayon::prelude::*;

use super::oracle::{fcf_matrix, f_matrix, spectral_norm};
use super::spectrum::ModeSpectrum;
use crate::mesh::TemporalGrid;
use crate::mgrit::Relaxation;
use crate::tridiag::SymTridiag;

/// Relative size below which `1 + tau~ sigma - pi` counts as zero, i.e. the
/// coarse propagator reproduces the fine product for that interval.
pub const DEGENERACY_GUARD: f64 = 1e-14;

/// Per-interval quantities of one mode, indexed by coarse interval
/// `0..N_c` (interval `k + 1` in 1-based terms).
#[derive(Debug, Clone)]
pub struct IntervalFactors {
    /// Product of `1 + tau_j sigma` over the fine steps of the interval; the
    /// fine eigenvalue product is its reciprocal.
    pub pi: Vec<f64>,
    /// `1 + tau~ sigma`; the coarse eigenvalue is its reciprocal.
    pub c: Vec<f64>,
    /// Fine eigenvalue product minus coarse eigenvalue, `1/pi - 1/c`.
    pub gap: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl IntervalFactors {
    pub fn new(sigma: f64, grid: &TemporalGrid) -> Self {
        let m = grid.coarsening;
        let nc = grid.n_coarse();
        let mut pi = Vec::with_capacity(nc);
        let mut c = Vec::with_capacity(nc);
        let mut gap = Vec::with_capacity(nc);
        let mut degenerate = Vec::with_capacity(nc);
        for (k, chunk) in grid.steps.chunks(m).enumerate() {
            // pi = 1 + S + E with S the sum of x_j = tau_j sigma and E the
            // higher-order part, accumulated without cancellation.
            let (mut s, mut e) = (0.0, 0.0);
            for &t in chunk {
                let x = t * sigma;
                e += x * (s + e);
                s += x;
            }
            let p = 1.0 + s + e;
            let ck = 1.0 + grid.coarse_steps[k] * sigma;
            let diff = (grid.coarse_steps[k] * sigma - s) - e;
            let deg = diff.abs() < DEGENERACY_GUARD * p;
            pi.push(p);
            c.push(ck);
            gap.push(if deg { 0.0 } else { diff / (p * ck) });
            degenerate.push(deg);
        }
        IntervalFactors { pi, c, gap, degenerate }
    }

    pub fn n_coarse(&self) -> usize {
        self.pi.len()
    }

    pub fn fine_products(&self) -> Vec<f64> {
        self.pi.iter().map(|p| 1.0 / p).collect()
    }

    pub fn coarse_eigs(&self) -> Vec<f64> {
        self.c.iter().map(|c| 1.0 / c).collect()
    }
}

/// Gram tridiagonal whose smallest eigenvalue is the squared reciprocal
/// two-level norm under FCF-relaxation. Rows correspond to coarse intervals
/// `2..=N_c`; requires `N_c >= 2` and no degenerate interval beyond the first.
pub fn fcf_tridiag(f: &IntervalFactors) -> SymTridiag {
    let nc = f.n_coarse();
    assert!(nc >= 2);
    // 0-based: interval s has pi[s], gap[s]; the 1-based index is s + 1.
    let zeta = |e: usize| (f.pi[e - 1] / f.gap[e]).powi(2);
    let rho = |s: usize| f.pi[s] * f.pi[s - 1] / (f.c[s] * f.gap[s] * f.gap[s]);
    let theta = |s: usize| (f.pi[s] / (f.c[s] * f.gap[s])).powi(2);
    let mut diag = Vec::with_capacity(nc - 1);
    let mut off = Vec::with_capacity(nc - 2);
    diag.push(zeta(1));
    for s in 1..nc - 1 {
        diag.push(theta(s) + zeta(s + 1));
        off.push(-rho(s));
    }
    SymTridiag::new(diag, off)
}

/// Gram tridiagonal for F-relaxation, one row per coarse interval.
pub fn f_tridiag(f: &IntervalFactors) -> SymTridiag {
    let nc = f.n_coarse();
    let mu = f.coarse_eigs();
    let mut diag = Vec::with_capacity(nc);
    let mut off = Vec::with_capacity(nc.saturating_sub(1));
    for a in 0..nc {
        let mut d = 1.0 / (f.gap[a] * f.gap[a]);
        if a >= 1 {
            d += (mu[a - 1] / f.gap[a - 1]).powi(2);
        }
        diag.push(d);
        if a + 1 < nc {
            off.push(-mu[a] / (f.gap[a] * f.gap[a]));
        }
    }
    SymTridiag::new(diag, off)
}

/// Two-level norm of the residual propagator for one mode, in the norm
/// induced by the eigenvector basis.
pub fn mode_norm(sigma: f64, grid: &TemporalGrid, relaxation: Relaxation) -> f64 {
    let f = IntervalFactors::new(sigma, grid);
    let nc = f.n_coarse();
    let used = match relaxation {
        Relaxation::Fcf if nc < 2 => return 0.0,
        Relaxation::Fcf => 1..nc,
        Relaxation::F => 0..nc,
    };
    let deg = used.clone().filter(|&s| f.degenerate[s]).count();
    if deg == used.len() {
        return 0.0;
    }
    if deg > 0 {
        // Removable singularity in some intervals: fall back to the dense
        // propagator with those gaps set to zero.
        let lp = f.fine_products();
        let mu = f.coarse_eigs();
        let t = match relaxation {
            Relaxation::Fcf => fcf_matrix(&lp, &mu, &f.gap),
            Relaxation::F => f_matrix(&mu, &f.gap),
        };
        return spectral_norm(&t);
    }
    let gram = match relaxation {
        Relaxation::Fcf => fcf_tridiag(&f),
        Relaxation::F => f_tridiag(&f),
    };
    1.0 / gram.min_eigenvalue().sqrt()
}

/// Largest per-mode norm: the exact two-level bound.
pub fn exact_bound(spec: &ModeSpectrum, grid: &TemporalGrid, relaxation: Relaxation) -> f64 {
    spec.sigma
        .par_iter()
        .map(|&s| mode_norm(s, grid, relaxation))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// TEAP constants and Gershgorin data of one mode.
#[derive(Debug, Clone)]
pub struct TeapMode {
    /// `delta_s` for `s = 2..=N_c` (index `s - 2`); equality values.
    pub deltas: Vec<f64>,
    /// Gershgorin fractions for `s = 2..=N_c-1` (index `s - 2`).
    pub fractions: Vec<f64>,
    pub applicable: bool,
    /// Squared-norm bound; meaningful only when applicable.
    pub bound_sq: f64,
}

pub fn teap_mode(f: &IntervalFactors) -> TeapMode {
    let nc = f.n_coarse();
    let mut applicable = true;
    let mut deltas = Vec::new();
    for s in 1..nc {
        if f.degenerate[s] {
            deltas.push(0.0);
            continue;
        }
        // 1/|prev|^2 - |mu| / |prev * cur| in terms of pi.
        let room = f.pi[s - 1] * f.pi[s - 1] - f.pi[s] * f.pi[s - 1] / f.c[s];
        if !(room > 0.0) {
            applicable = false;
            deltas.push(f64::NAN);
        } else {
            deltas.push(f.gap[s] * f.gap[s] / room);
        }
    }
    let mut fractions = Vec::new();
    for s in 1..nc.saturating_sub(1) {
        let (ds, dn) = (deltas[s - 1], deltas[s]);
        let num = dn * ds * f.pi[s - 1] * f.c[s];
        let den = ds * f.pi[s - 1] * f.c[s] - dn * f.pi[s];
        if num == 0.0 {
            fractions.push(0.0);
        } else if !(den > 0.0) {
            applicable = false;
            fractions.push(f64::NAN);
        } else {
            fractions.push(num / den);
        }
    }
    let bound_sq = deltas
        .first()
        .copied()
        .into_iter()
        .chain(fractions.iter().copied())
        .fold(0.0, f64::max);
    TeapMode {
        deltas,
        fractions,
        applicable,
        bound_sq,
    }
}

#[derive(Debug, Clone)]
pub struct TeapReport {
    /// Gershgorin bound on the two-level norm, if the TEAP condition can be
    /// met for every mode.
    pub bound: Option<f64>,
    /// `delta_2 < 1` for every mode.
    pub delta2_below_one: bool,
    /// Every Gershgorin fraction below one.
    pub fractions_below_one: bool,
}

pub fn teap(spec: &ModeSpectrum, grid: &TemporalGrid) -> TeapReport {
    let modes: Vec<TeapMode> = spec
        .sigma
        .par_iter()
        .map(|&s| teap_mode(&IntervalFactors::new(s, grid)))
        .collect();
    let applicable = modes.iter().all(|m| m.applicable);
    let bound = applicable.then(|| modes.iter().map(|m| m.bound_sq).fold(0.0, f64::max).sqrt());
    TeapReport {
        bound,
        delta2_below_one: applicable && modes.iter().all(|m| m.deltas.first().is_none_or(|&d| d < 1.0)),
        fractions_below_one: applicable && modes.iter().all(|m| m.fractions.iter().all(|&x| x < 1.0)),
    }
}

/// Largest relative violations of the two entrywise inequalities behind the
/// Gershgorin estimate, for equality-valued deltas:
/// `zeta_s - rho_s >= 1/delta_s` and
/// `theta_s - rho_s >= -(mu_s/delta_s) (pi_s/pi_{s-1})`.
pub fn gershgorin_inequalities(f: &IntervalFactors, t: &TeapMode) -> (f64, f64) {
    let nc = f.n_coarse();
    let (mut v1, mut v2) = (0.0f64, 0.0f64);
    let viol = |lhs: f64, rhs: f64| ((rhs - lhs) / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)).max(0.0);
    for s in 1..nc.saturating_sub(1) {
        if f.degenerate[s] {
            continue;
        }
        let g2 = f.gap[s] * f.gap[s];
        let zeta = f.pi[s - 1] * f.pi[s - 1] / g2;
        let rho = f.pi[s] * f.pi[s - 1] / (f.c[s] * g2);
        let theta = (f.pi[s] / f.c[s]).powi(2) / g2;
        let delta = t.deltas[s - 1];
        v1 = v1.max(viol(zeta - rho, 1.0 / delta));
        v2 = v2.max(viol(theta - rho, -(f.pi[s] / (f.c[s] * delta * f.pi[s - 1]))));
    }
    (v1, v2)
}

/// Exact value and cap of the norm of `[Q I]`.
#[derive(Debug, Clone, Copy)]
pub struct QNorm {
    pub exact: f64,
    pub cap: f64,
}

pub fn q_norm(spec: &ModeSpectrum, grid: &TemporalGrid) -> QNorm {
    let m = grid.coarsening;
    let exact = spec
        .sigma
        .iter()
        .map(|&s| {
            grid.steps
                .chunks(m)
                .map(|chunk| {
                    let mut prod = 1.0;
                    let mut sum = 1.0;
                    for &t in chunk.iter().rev().take(m - 1) {
                        prod /= 1.0 + t * s;
                        sum += prod * prod;
                    }
                    sum
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
        .sqrt();
    QNorm {
        exact,
        cap: (m as f64).sqrt(),
    }
}

/// `tridiag(-mu, 1 + mu^2, -mu)` of the given size with leading entry 1.
pub fn d_omega(mu: f64, size: usize) -> SymTridiag {
    let mut diag = vec![1.0 + mu * mu; size];
    if size > 0 {
        diag[0] = 1.0;
    }
    SymTridiag::new(diag, vec![-mu; size.saturating_sub(1)])
}

#[derive(Debug, Clone, Copy)]
pub struct DBracket {
    pub lower: f64,
    pub upper: f64,
    pub lambda_min: f64,
}

impl DBracket {
    pub fn holds(&self) -> bool {
        self.lower <= self.lambda_min && self.lambda_min <= self.upper
    }
}

/// Enclosure of the smallest eigenvalue of the uniform-grid matrix of order
/// `N_c - 1`.
pub fn d_omega_bracket(mu: f64, nc: usize) -> DBracket {
    assert!(nc >= 2);
    let base = (1.0 - mu).powi(2);
    let k = ((nc - 1) as f64).powi(2);
    let pi2 = std::f64::consts::PI.powi(2);
    DBracket {
        lower: base + pi2 * mu / (6.0 * k),
        upper: base + pi2 * mu / k,
        lambda_min: d_omega(mu, nc - 1).min_eigenvalue(),
    }
}

/// One row of the bound comparison.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub relaxation: Relaxation,
    pub exact: f64,
    /// Gershgorin bound; FCF only, `None` when the TEAP condition fails.
    pub teap: Option<f64>,
    pub q_norm: QNorm,
    /// `exact * sqrt(m)`
    pub combined: f64,
    pub delta2_below_one: Option<bool>,
    pub fractions_below_one: Option<bool>,
}

pub fn bound_report(spec: &ModeSpectrum, grid: &TemporalGrid, relaxation: Relaxation) -> BoundReport {
    let exact = exact_bound(spec, grid, relaxation);
    let q = q_norm(spec, grid);
    let (teap_bound, d2, fr) = match relaxation {
        Relaxation::Fcf => {
            let t = teap(spec, grid);
            (t.bound, Some(t.delta2_below_one), Some(t.fractions_below_one))
        }
        Relaxation::F => (None, None, None),
    };
    BoundReport {
        relaxation,
        exact,
        teap: teap_bound,
        q_norm: q,
        combined: exact * q.cap,
        delta2_below_one: d2,
        fractions_below_one: fr,
    }
}
