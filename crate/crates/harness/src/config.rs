//! Experiment configuration. Every key is optional; each subcommand fills in
//! the settings of the corresponding experiment when a key is absent.

use std::path::Path;

use fracmgrit_core::mesh::{DomainTag, GridKind};
use fracmgrit_core::mgrit::Relaxation;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub discretization: DiscretizationSection,
    pub solver: SolverSection,
    pub mgrit: MgritSection,
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    /// Fractional orders to sweep.
    pub alphas: Option<Vec<f64>>,
    pub domain: Option<String>,
    pub final_time: Option<f64>,
    /// `manufactured` or `zero`.
    pub forcing: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    /// Refinement levels `k`, `h = 2^-k`.
    pub levels: Option<Vec<u32>>,
    /// Intervals of the extended-direction mesh; default `4 ceil(1/(2h))`.
    pub z_intervals: Option<usize>,
    pub truncation: Option<f64>,
    /// Time step counts `N`.
    pub time_steps: Option<Vec<usize>>,
    /// Time step sizes; the step count follows from the final time.
    pub taus: Option<Vec<f64>>,
    /// `uniform` and/or `graded`.
    pub grids: Option<Vec<String>>,
    pub grading: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// `mg` or `direct`.
    pub spatial: Option<String>,
    /// `block` (extended system) or `trace` (dense trace operator).
    pub propagator: Option<String>,
    pub tol_reduction: Option<f64>,
    pub max_it: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MgritSection {
    pub relaxations: Option<Vec<String>>,
    /// Coarsening factors to sweep (two-level) or, with `levels > 2`, the
    /// per-level factors.
    pub coarsening: Option<Vec<usize>>,
    pub levels: Option<usize>,
    pub halting_abs: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialSolver {
    Multigrid,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorKind {
    Block,
    Trace,
}

/// Settings shared by every experiment after defaults and validation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub alphas: Vec<f64>,
    pub domain: DomainTag,
    pub final_time: f64,
    pub manufactured: bool,
    pub levels: Vec<u32>,
    pub z_intervals: Option<usize>,
    pub truncation: f64,
    pub time_steps: Vec<usize>,
    pub taus: Vec<f64>,
    pub grids: Vec<GridKind>,
    pub spatial: SpatialSolver,
    pub propagator: PropagatorKind,
    pub tol_reduction: f64,
    pub max_it: usize,
    pub relaxations: Vec<Relaxation>,
    pub coarsening: Vec<usize>,
    pub mgrit_levels: usize,
    pub halting_abs: f64,
    pub max_iters: usize,
    pub seed: u64,
}

/// Per-experiment values used when a key is missing.
#[derive(Debug, Clone)]
pub struct Defaults {
    pub alphas: Vec<f64>,
    pub final_time: f64,
    pub levels: Vec<u32>,
    pub time_steps: Vec<usize>,
    pub taus: Vec<f64>,
    pub propagator: PropagatorKind,
    pub forcing_manufactured: bool,
}

impl Defaults {
    /// Error and iteration study on refined meshes.
    pub fn convergence() -> Self {
        Defaults {
            alphas: vec![0.4, 1.0, 1.4],
            // Unused: each row runs `N` steps of its own size.
            final_time: 1.0,
            levels: vec![2, 3, 4, 5],
            time_steps: vec![100],
            taus: vec![1e-4, 5e-5],
            propagator: PropagatorKind::Block,
            forcing_manufactured: true,
        }
    }

    /// Spatial solver iterations over fractional orders and step sizes.
    pub fn robustness() -> Self {
        Defaults {
            alphas: vec![0.6, 0.8, 1.0, 1.2, 1.6],
            final_time: 0.25,
            levels: vec![4],
            time_steps: vec![],
            taus: (6..=10).map(|p| 1.0 / f64::from(1u32 << p)).collect(),
            propagator: PropagatorKind::Block,
            forcing_manufactured: true,
        }
    }

    /// Two-level bounds against observed MGRIT convergence.
    pub fn bounds() -> Self {
        Defaults {
            alphas: vec![1.0],
            final_time: 1.0,
            levels: vec![3],
            time_steps: vec![256],
            taus: vec![],
            propagator: PropagatorKind::Trace,
            forcing_manufactured: false,
        }
    }

    /// Spectrum and matrix dumps.
    pub fn export() -> Self {
        Defaults {
            alphas: vec![1.0],
            final_time: 1.0,
            levels: vec![2],
            time_steps: vec![],
            taus: vec![],
            propagator: PropagatorKind::Trace,
            forcing_manufactured: false,
        }
    }
}

fn relaxation(s: &str) -> Option<Relaxation> {
    match s.to_ascii_uppercase().as_str() {
        "F" => Some(Relaxation::F),
        "FCF" => Some(Relaxation::Fcf),
        _ => None,
    }
}

impl ExperimentConfig {
    /// Applies defaults and checks every constraint before any computation.
    pub fn resolve(&self, d: &Defaults) -> Result<Settings, ConfigError> {
        let p = &self.problem;
        let alphas = p.alphas.clone().unwrap_or_else(|| d.alphas.clone());
        for a in &alphas {
            if !(*a > 0.0 && *a < 2.0) {
                return Err(bad("problem.alphas", format!("{a} is outside (0, 2)")));
            }
        }
        let domain: DomainTag = p
            .domain
            .as_deref()
            .unwrap_or("unit-square")
            .parse()
            .map_err(|e: fracmgrit_core::Error| bad("problem.domain", e.to_string()))?;
        let final_time = p.final_time.unwrap_or(d.final_time);
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(bad("problem.final_time", format!("{final_time} must be positive")));
        }
        let manufactured = match p.forcing.as_deref() {
            None => d.forcing_manufactured,
            Some("manufactured") => true,
            Some("zero") => false,
            Some(other) => {
                return Err(bad("problem.forcing", format!("`{other}` is not `manufactured` or `zero`")))
            }
        };

        let q = &self.discretization;
        let levels = q.levels.clone().unwrap_or_else(|| d.levels.clone());
        if let Some(k) = levels.iter().find(|&&k| !(1..=10).contains(&k)) {
            return Err(bad("discretization.levels", format!("level {k} is outside 1..=10")));
        }
        if let Some(m) = q.z_intervals {
            if m == 0 || m % 4 != 0 {
                return Err(bad("discretization.z_intervals", format!("{m} is not a positive multiple of 4")));
            }
        }
        let truncation = q.truncation.unwrap_or(1.0);
        if !(truncation > 0.0 && truncation.is_finite()) {
            return Err(bad("discretization.truncation", format!("{truncation} must be positive")));
        }
        let time_steps = q.time_steps.clone().unwrap_or_else(|| d.time_steps.clone());
        if time_steps.contains(&0) {
            return Err(bad("discretization.time_steps", "step counts must be positive"));
        }
        let taus = q.taus.clone().unwrap_or_else(|| d.taus.clone());
        if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(bad("discretization.taus", format!("{t} must be positive")));
        }
        let grading = q.grading.unwrap_or(2.5);
        if !(grading >= 1.0 && grading.is_finite()) {
            return Err(bad("discretization.grading", format!("{grading} must be at least 1")));
        }
        let mut grids = Vec::new();
        for g in q.grids.clone().unwrap_or_else(|| vec!["uniform".into(), "graded".into()]) {
            grids.push(match g.as_str() {
                "uniform" => GridKind::Uniform,
                "graded" => GridKind::Graded { exponent: grading },
                other => {
                    return Err(bad("discretization.grids", format!("`{other}` is not `uniform` or `graded`")))
                }
            });
        }

        let s = &self.solver;
        let spatial = match s.spatial.as_deref().unwrap_or("mg") {
            "mg" => SpatialSolver::Multigrid,
            "direct" => SpatialSolver::Direct,
            other => return Err(bad("solver.spatial", format!("`{other}` is not `mg` or `direct`"))),
        };
        let propagator = match s.propagator.as_deref() {
            None => d.propagator,
            Some("block") => PropagatorKind::Block,
            Some("trace") => PropagatorKind::Trace,
            Some(other) => return Err(bad("solver.propagator", format!("`{other}` is not `block` or `trace`"))),
        };
        let tol_reduction = s.tol_reduction.unwrap_or(1e8);
        if !(tol_reduction > 1.0 && tol_reduction.is_finite()) {
            return Err(bad("solver.tol_reduction", format!("{tol_reduction} must exceed 1")));
        }
        let max_it = s.max_it.unwrap_or(100);
        if max_it == 0 {
            return Err(bad("solver.max_it", "must be positive"));
        }

        let g = &self.mgrit;
        let mut relaxations = Vec::new();
        for r in g.relaxations.clone().unwrap_or_else(|| vec!["F".into(), "FCF".into()]) {
            relaxations.push(
                relaxation(&r).ok_or_else(|| bad("mgrit.relaxations", format!("`{r}` is not `F` or `FCF`")))?,
            );
        }
        let coarsening = g.coarsening.clone().unwrap_or_else(|| vec![2, 4, 8, 16]);
        if let Some(m) = coarsening.iter().find(|&&m| m < 2) {
            return Err(bad("mgrit.coarsening", format!("factor {m} must be at least 2")));
        }
        let mgrit_levels = g.levels.unwrap_or(2);
        if mgrit_levels < 2 {
            return Err(bad("mgrit.levels", "at least two time levels are required"));
        }
        let halting_abs = g.halting_abs.unwrap_or(1e-8);
        if !(halting_abs > 0.0 && halting_abs.is_finite()) {
            return Err(bad("mgrit.halting_abs", format!("{halting_abs} must be positive")));
        }
        let max_iters = g.max_iters.unwrap_or(100);
        if max_iters == 0 {
            return Err(bad("mgrit.max_iters", "must be positive"));
        }

        Ok(Settings {
            alphas,
            domain,
            final_time,
            manufactured,
            levels,
            z_intervals: q.z_intervals,
            truncation,
            time_steps,
            taus,
            grids,
            spatial,
            propagator,
            tol_reduction,
            max_it,
            relaxations,
            coarsening,
            mgrit_levels,
            halting_abs,
            max_iters,
            seed: g.seed.unwrap_or(0),
        })
    }
}

impl Settings {
    /// Coarsening factors of one MGRIT hierarchy: a single factor for two
    /// levels, otherwise the factor repeated (or the listed factors).
    pub fn hierarchy_factors(&self, m: usize) -> Vec<usize> {
        if self.mgrit_levels == 2 {
            vec![m]
        } else {
            vec![m; self.mgrit_levels - 1]
        }
    }

    /// Every step count must be divisible through the whole hierarchy.
    pub fn check_divisibility(&self) -> Result<(), ConfigError> {
        for &n in &self.time_steps {
            for &m in &self.coarsening {
                let span = m.pow((self.mgrit_levels - 1) as u32);
                if n % span != 0 {
                    return Err(bad(
                        "mgrit.coarsening",
                        format!("m = {m} over {} levels does not divide N = {n}", self.mgrit_levels),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Step count for a step size over the final time; must be an integer.
    pub fn steps_for(&self, tau: f64) -> Result<usize, ConfigError> {
        let n = self.final_time / tau;
        let r = n.round();
        if r < 1.0 || (n - r).abs() > 1e-9 * n {
            return Err(bad(
                "discretization.taus",
                format!("final time {} is not a multiple of tau = {tau}", self.final_time),
            ));
        }
        Ok(r as usize)
    }
}
