use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use fracmgrit_core::assembly::{schur_complement, to_dense, OperatorSet};
use fracmgrit_core::mesh::{
    build_spatial_mesh, build_temporal_grid, build_zmesh, default_z_intervals, GridKind, SpatialMesh,
};
use fracmgrit_core::mgrit::{self, MgritOptions, MgritStats};
use fracmgrit_core::multigrid::{DirectSolver, MgHierarchy};
use fracmgrit_core::problem::{manufactured_errors, mode, Forcing};
use fracmgrit_core::quadrature::TriangleRule;
use fracmgrit_core::theory::{bound_report, spectrum, BoundReport, ModeSpectrum};
use fracmgrit_core::timestepping::{sequential_solve, Propagator};
use fracmgrit_core::Error as CoreError;
use rayon::prelude::*;

use crate::config::{ConfigError, PropagatorKind, Settings, SpatialSolver};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// Column by header name.
    pub fn column(&self, name: &str) -> Vec<&str> {
        let i = self.header.iter().position(|h| *h == name).expect("known column");
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }
}

/// Floats with 17 significant digits, which round-trip exactly.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

fn opt_bool(x: Option<bool>) -> String {
    x.map_or_else(|| "NA".into(), |b| b.to_string())
}

/// Output files of one subcommand and the number of mandatory rows that did
/// not converge.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<(String, Table)>,
    pub extra: Vec<(String, String)>,
    pub nonconverged: usize,
}

impl Report {
    pub fn table(&self, name: &str) -> &Table {
        &self.files.iter().find(|(n, _)| n == name).expect("table present").1
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| RunError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, t) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, t.render()).map_err(io(&p))?;
        }
        for (name, text) in &self.extra {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(io(&p))?;
        }
        Ok(())
    }
}

pub struct Problem {
    pub mesh: SpatialMesh,
    pub ops: Arc<OperatorSet>,
}

pub fn build_problem(s: &Settings, level: u32, alpha: f64) -> Result<Problem, RunError> {
    let mesh = build_spatial_mesh(s.domain, level)?;
    let intervals = s.z_intervals.unwrap_or_else(|| default_z_intervals(mesh.h));
    let z = build_zmesh(intervals, alpha, s.truncation)?;
    let ops = Arc::new(OperatorSet::new(&mesh, &z, alpha)?);
    Ok(Problem { mesh, ops })
}

pub fn propagator(s: &Settings, p: &Problem) -> Result<Propagator, RunError> {
    Ok(match s.propagator {
        PropagatorKind::Trace => Propagator::trace_reduced(p.ops.clone())?,
        PropagatorKind::Block => {
            let solver: Box<dyn fracmgrit_core::multigrid::BlockSolver> = match s.spatial {
                SpatialSolver::Multigrid => {
                    Box::new(MgHierarchy::new(&p.mesh, &p.ops)?.with_tolerance(s.tol_reduction, s.max_it))
                }
                SpatialSolver::Direct => Box::new(DirectSolver::new(&p.ops)),
            };
            Propagator::full_block(p.ops.clone(), solver)
        }
    })
}

fn forcing(s: &Settings, p: &Problem, alpha: f64) -> Forcing {
    if s.manufactured {
        Forcing::manufactured(&p.mesh, alpha)
    } else {
        Forcing::Zero
    }
}

/// Average inner iterations per spatial solve.
fn average_iterations(prop: &Propagator) -> f64 {
    let (solves, iters) = prop.solve_counts();
    if solves == 0 {
        0.0
    } else {
        iters as f64 / solves as f64
    }
}

fn is_nonconvergence(e: &CoreError) -> bool {
    matches!(e, CoreError::StepNotConverged { .. } | CoreError::SolveNotConverged { .. })
}

struct ErrorRun {
    dof: usize,
    h: f64,
    final_h1: f64,
    max_h1: f64,
    aiter: f64,
    converged: bool,
    /// `(k, t_k, H1, L2)`
    history: Vec<(usize, f64, f64, f64)>,
}

fn error_run(s: &Settings, alpha: f64, tau: f64, n: usize, level: u32) -> Result<ErrorRun, RunError> {
    let p = build_problem(s, level, alpha)?;
    let prop = propagator(s, &p)?;
    let grid = build_temporal_grid(GridKind::Uniform, n, tau * n as f64, 1)?;
    let u0 = p.mesh.interpolate(mode);
    let f = forcing(s, &p, alpha);
    let (dof, h) = (p.ops.block_dim(), p.mesh.h);
    match sequential_solve(&prop, &u0, &grid, &f) {
        Ok(traj) => {
            let rule = TriangleRule::collapsed(4);
            let history: Vec<_> = traj
                .states
                .iter()
                .zip(&traj.times)
                .enumerate()
                .map(|(k, (u, &t))| {
                    let (l2, h1) = manufactured_errors(&p.mesh, &rule, u, t);
                    (k, t, h1, l2)
                })
                .collect();
            Ok(ErrorRun {
                dof,
                h,
                final_h1: history.last().unwrap().2,
                max_h1: history.iter().map(|r| r.2).fold(0.0, f64::max),
                aiter: average_iterations(&prop),
                converged: true,
                history,
            })
        }
        Err(e) if is_nonconvergence(&e) => Ok(ErrorRun {
            dof,
            h,
            final_h1: f64::NAN,
            max_h1: f64::NAN,
            aiter: average_iterations(&prop),
            converged: false,
            history: Vec::new(),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Final-time and worst-in-time H1 errors with refinement ratios and the
/// average spatial solver iterations, per fractional order and step size.
pub fn convergence_table(s: &Settings) -> Result<Report, RunError> {
    if !s.manufactured {
        return Err(ConfigError::Invalid {
            key: "problem.forcing".into(),
            reason: "the error study needs the manufactured forcing".into(),
        }
        .into());
    }
    let n = *s.time_steps.first().ok_or_else(|| ConfigError::Invalid {
        key: "discretization.time_steps".into(),
        reason: "one step count is required".into(),
    })?;
    let points: Vec<(f64, f64, u32)> = s
        .alphas
        .iter()
        .flat_map(|&a| s.taus.iter().flat_map(move |&t| s.levels.iter().map(move |&k| (a, t, k))))
        .collect();
    let runs: Vec<ErrorRun> = points
        .par_iter()
        .map(|&(a, t, k)| error_run(s, a, t, n, k))
        .collect::<Result<_, _>>()?;

    let mut table = Table::new(&[
        "alpha", "tau", "h", "dof", "error_final", "rate_final", "error_max", "rate_max", "aiter", "converged",
    ]);
    let mut traj = Table::new(&["alpha", "tau", "h", "k", "t", "h1_error", "l2_error"]);
    let mut nonconverged = 0;
    for (i, (&(a, t, _), r)) in points.iter().zip(&runs).enumerate() {
        let prev = (i > 0 && points[i - 1].0 == a && points[i - 1].1 == t).then(|| &runs[i - 1]);
        let rate = |f: fn(&ErrorRun) -> f64| prev.map_or(f64::NAN, |p| f(p) / f(r));
        nonconverged += usize::from(!r.converged);
        table.rows.push(vec![
            num(a),
            num(t),
            num(r.h),
            r.dof.to_string(),
            num(r.final_h1),
            num(rate(|r| r.final_h1)),
            num(r.max_h1),
            num(rate(|r| r.max_h1)),
            num(r.aiter),
            r.converged.to_string(),
        ]);
        for &(k, tk, h1, l2) in &r.history {
            traj.rows.push(vec![num(a), num(t), num(r.h), k.to_string(), num(tk), num(h1), num(l2)]);
        }
    }
    Ok(Report {
        files: vec![("convergence_table.csv".into(), table), ("trajectory_errors.csv".into(), traj)],
        extra: Vec::new(),
        nonconverged,
    })
}

/// Average spatial solver iterations over fractional orders and step sizes
/// at one mesh level.
pub fn robustness_table(s: &Settings) -> Result<Report, RunError> {
    let level = *s.levels.first().ok_or_else(|| ConfigError::Invalid {
        key: "discretization.levels".into(),
        reason: "one level is required".into(),
    })?;
    let steps: Vec<usize> = s.taus.iter().map(|&t| s.steps_for(t)).collect::<Result<_, _>>()?;
    let points: Vec<(f64, f64, usize)> = s
        .alphas
        .iter()
        .flat_map(|&a| s.taus.iter().zip(&steps).map(move |(&t, &n)| (a, t, n)))
        .collect();
    let runs: Vec<(f64, bool)> = points
        .par_iter()
        .map(|&(a, _, n)| -> Result<(f64, bool), RunError> {
            let p = build_problem(s, level, a)?;
            let prop = propagator(s, &p)?;
            let grid = build_temporal_grid(GridKind::Uniform, n, s.final_time, 1)?;
            let f = forcing(s, &p, a);
            match sequential_solve(&prop, &p.mesh.interpolate(mode), &grid, &f) {
                Ok(_) => Ok((average_iterations(&prop), true)),
                Err(e) if is_nonconvergence(&e) => Ok((average_iterations(&prop), false)),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_, _>>()?;
    let h = 0.5f64.powi(level as i32);
    let mut table = Table::new(&["alpha", "tau", "h", "steps", "aiter", "converged"]);
    let mut nonconverged = 0;
    for (&(a, t, n), &(it, ok)) in points.iter().zip(&runs) {
        nonconverged += usize::from(!ok);
        table.rows.push(vec![num(a), num(t), num(h), n.to_string(), num(it), ok.to_string()]);
    }
    Ok(Report {
        files: vec![("robustness_table.csv".into(), table)],
        extra: Vec::new(),
        nonconverged,
    })
}

/// One point of the bound study.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    pub grid: GridKind,
    pub report: BoundReport,
    pub stats: MgritStats,
    pub strongly_stable: bool,
}

pub fn bound_rows(s: &Settings) -> Result<Vec<BoundRow>, RunError> {
    s.check_divisibility()?;
    let level = *s.levels.first().ok_or_else(|| ConfigError::Invalid {
        key: "discretization.levels".into(),
        reason: "one level is required".into(),
    })?;
    let mut rows = Vec::new();
    for &alpha in &s.alphas {
        let p = build_problem(s, level, alpha)?;
        let q = schur_complement(&p.ops)?;
        let spec = spectrum(&q, &to_dense(&p.ops.mass_raw))?;
        let prop = match s.propagator {
            PropagatorKind::Trace => Propagator::with_trace_operator(p.ops.clone(), q),
            PropagatorKind::Block => propagator(s, &p)?,
        };
        let f = forcing(s, &p, alpha);
        let psi0 = p.mesh.interpolate(mode);
        let mut points = Vec::new();
        for &n in &s.time_steps {
            for &m in &s.coarsening {
                for &g in &s.grids {
                    for &r in &s.relaxations {
                        points.push((n, m, g, r));
                    }
                }
            }
        }
        let out: Vec<BoundRow> = points
            .par_iter()
            .map(|&(n, m, kind, relaxation)| -> Result<BoundRow, RunError> {
                let grid = build_temporal_grid(kind, n, s.final_time, m)?;
                let report = bound_report(&spec, &grid, relaxation);
                let opts = MgritOptions {
                    relaxation,
                    levels: s.mgrit_levels,
                    coarsening: s.hierarchy_factors(m),
                    halting_abs: s.halting_abs,
                    max_iters: s.max_iters,
                    seed: s.seed,
                    ..MgritOptions::default()
                };
                let (_, stats) = mgrit::solve(&prop, &grid, &f, &psi0, &opts)?;
                Ok(BoundRow {
                    alpha,
                    n,
                    m,
                    grid: kind,
                    report,
                    stats,
                    strongly_stable: spec.strongly_stable(&grid),
                })
            })
            .collect::<Result<_, _>>()?;
        rows.extend(out);
    }
    Ok(rows)
}

/// Exact, Gershgorin and combined bounds next to the observed MGRIT
/// convergence factor, with the per-iteration residual histories.
pub fn bounds(s: &Settings) -> Result<Report, RunError> {
    let rows = bound_rows(s)?;
    let mut table = Table::new(&[
        "m",
        "N",
        "grid_kind",
        "relaxation",
        "exact_bound",
        "teap_bound",
        "q_norm",
        "combined_bound",
        "rho_observed",
        "suff_cond_1",
        "suff_cond_2",
        "alpha",
        "iterations",
        "converged",
    ]);
    let mut hist = Table::new(&["alpha", "m", "N", "grid_kind", "relaxation", "iter", "residual", "factor"]);
    let mut nonconverged = 0;
    for r in &rows {
        let b = &r.report;
        nonconverged += usize::from(!r.stats.converged);
        let (kind, relax) = (r.grid.label(), b.relaxation.label());
        table.rows.push(vec![
            r.m.to_string(),
            r.n.to_string(),
            kind.into(),
            relax.into(),
            num(b.exact),
            opt_num(b.teap),
            num(b.q_norm.exact),
            num(b.combined),
            num(r.stats.rho_observed),
            opt_bool(b.delta2_below_one),
            opt_bool(b.fractions_below_one),
            num(r.alpha),
            r.stats.iterations.to_string(),
            r.stats.converged.to_string(),
        ]);
        for (i, res) in r.stats.residuals.iter().enumerate() {
            let factor = if i == 0 { f64::NAN } else { res / r.stats.residuals[i - 1] };
            hist.rows.push(vec![
                num(r.alpha),
                r.m.to_string(),
                r.n.to_string(),
                kind.into(),
                relax.into(),
                i.to_string(),
                num(*res),
                num(factor),
            ]);
        }
    }
    Ok(Report {
        files: vec![("bounds.csv".into(), table), ("residual_history.csv".into(), hist)],
        extra: Vec::new(),
        nonconverged,
    })
}

pub fn problem_spectrum(s: &Settings, level: u32, alpha: f64) -> Result<(Problem, ModeSpectrum), RunError> {
    let p = build_problem(s, level, alpha)?;
    let q = schur_complement(&p.ops)?;
    let spec = spectrum(&q, &to_dense(&p.ops.mass_raw))?;
    Ok((p, spec))
}

/// Generalized eigenvalues of the trace operator and the time mass matrix.
pub fn spectrum_table(s: &Settings) -> Result<Report, RunError> {
    let mut table = Table::new(&["alpha", "h", "index", "sigma"]);
    for &alpha in &s.alphas {
        for &level in &s.levels {
            let (p, spec) = problem_spectrum(s, level, alpha)?;
            for (i, x) in spec.sigma.iter().enumerate() {
                table.rows.push(vec![num(alpha), num(p.mesh.h), i.to_string(), num(*x)]);
            }
        }
    }
    Ok(Report {
        files: vec![("spectrum.csv".into(), table)],
        extra: Vec::new(),
        nonconverged: 0,
    })
}

fn coordinate_text(rows: usize, cols: usize, entries: impl Iterator<Item = (usize, usize, f64)>) -> String {
    let mut s = format!("% {rows} {cols}\n");
    for (r, c, v) in entries {
        let _ = writeln!(s, "{r} {c} {}", num(v));
    }
    s
}

/// Mesh as CSV and every matrix in coordinate format (`row col value`,
/// 0-based, preceded by a `% rows cols` line).
pub fn export(s: &Settings) -> Result<Report, RunError> {
    let (Some(&alpha), Some(&level)) = (s.alphas.first(), s.levels.first()) else {
        return Err(ConfigError::Invalid {
            key: "problem.alphas".into(),
            reason: "export needs one fractional order and one level".into(),
        }
        .into());
    };
    let p = build_problem(s, level, alpha)?;
    let mut vertices = Vec::new();
    p.mesh.write_vertices_csv(&mut vertices)?;
    let mut triangles = Vec::new();
    p.mesh.write_triangles_csv(&mut triangles)?;
    let sparse = |a: &sprs::CsMat<f64>| {
        coordinate_text(
            a.rows(),
            a.cols(),
            a.outer_iterator()
                .enumerate()
                .flat_map(|(r, row)| row.iter().map(move |(c, &v)| (r, c, v)).collect::<Vec<_>>()),
        )
    };
    let tri = |t: &fracmgrit_core::tridiag::SymTridiag| {
        let n = t.len();
        coordinate_text(
            n,
            n,
            (0..n).flat_map(|i| (i.saturating_sub(1)..(i + 2).min(n)).map(move |j| (i, j, t.get(i, j)))),
        )
    };
    let q = schur_complement(&p.ops)?;
    let dense = coordinate_text(
        q.nrows(),
        q.ncols(),
        (0..q.nrows()).flat_map(|i| (0..q.ncols()).map(move |j| (i, j))).map(|(i, j)| (i, j, q[(i, j)])),
    );
    let utf8 = |b: Vec<u8>| String::from_utf8(b).expect("ascii csv");
    Ok(Report {
        files: Vec::new(),
        extra: vec![
            ("vertices.csv".into(), utf8(vertices)),
            ("triangles.csv".into(), utf8(triangles)),
            ("mass_spatial.txt".into(), sparse(&p.ops.mass_raw)),
            ("stiffness_spatial.txt".into(), sparse(&p.ops.stiff_raw)),
            ("mass_extended.txt".into(), tri(&p.ops.z_mass)),
            ("stiffness_extended.txt".into(), tri(&p.ops.z_stiff)),
            ("trace_operator.txt".into(), dense),
        ],
        nonconverged: 0,
    })
}
