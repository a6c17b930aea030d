//! Convergence sweeps over `ε` and the reports they produce.
//!
//! Every `ε` starts from the same function of `s`, so differences between
//! rows isolate the effect of `ε`. Traces are taken from a Richardson
//! extrapolation of implicit Euler runs: the time-discretisation error of a
//! plain run would otherwise swamp the exponentially small `ε` corrections
//! at the small end of the sweep.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_solver::{integrate, richardson, Field, Grid, InitialData, Trajectory};
use crate::functionals::{ActionAccumulator, MASS_TOL};
use crate::limit_system::{entropy0, solve_limit, LimitState};
use crate::particles::{empirical_distance, simulate, ParticleConfig, ParticleInit, ParticleRun};
use crate::measures::{ContextOptions, EpsilonContext, EPS_MAX, EPS_MIN};
use crate::potential::{reaction_constants, PotentialChoice, PotentialSpec};
use crate::recovery::RecoveryConfig;

pub const REPORT_HEADER: &str = "eps,trace_L1,trace_sup,rate_obs,rate_ratio,watson,affine_dev,J_eps,A_eps";

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "KRAMERS_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportFormat {
    pub csv: bool,
    pub json: bool,
}

impl Default for ReportFormat {
    fn default() -> Self {
        Self { csv: true, json: true }
    }
}

/// Configuration of a sweep; every field has a default so partial JSON
/// files are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialChoice,
    pub eps: Vec<f64>,
    /// Nodes of the uniform `s`-grid.
    pub nodes: usize,
    /// Implicit Euler steps of the coarsest run.
    pub steps: usize,
    /// Number of runs (step counts doubling) in the time extrapolation.
    pub extrapolation: usize,
    /// Recorded stamps per run.
    pub stamps: usize,
    /// Final time; `None` means `1.5/k`.
    pub t_end: Option<f64>,
    /// Initial data in `s`: `step:a,b`, `const:c` or `file:<csv>`.
    pub init: String,
    pub out: PathBuf,
    pub seed: u64,
    pub format: ReportFormat,
    pub recovery: RecoveryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            potential: PotentialChoice::default(),
            eps: vec![0.2, 0.12, 0.08, 0.05],
            nodes: 401,
            steps: 2000,
            extrapolation: 3,
            stamps: 500,
            t_end: None,
            init: "tanh:2,0,0.05".into(),
            out: PathBuf::from("out"),
            seed: 1,
            format: ReportFormat::default(),
            recovery: RecoveryConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("malformed config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::InvalidInput("empty eps list".into()));
        }
        for &eps in &self.eps {
            if !(EPS_MIN..=EPS_MAX).contains(&eps) {
                return Err(Error::EpsilonRange { eps, min: EPS_MIN, max: EPS_MAX });
            }
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidInput(format!("T must be positive, got {t}")));
            }
        }
        if self.nodes < 3 || self.steps == 0 || self.stamps == 0 {
            return Err(Error::InvalidInput("nodes ≥ 3, steps ≥ 1 and stamps ≥ 1 required".into()));
        }
        if !(1..=4).contains(&self.extrapolation) {
            return Err(Error::InvalidInput("extrapolation must use 1 to 4 runs".into()));
        }
        if !self.steps.is_multiple_of(self.stamps) {
            return Err(Error::InvalidInput("steps must be a multiple of stamps".into()));
        }
        InitialData::parse(&self.init)?;
        self.recovery.validate()
    }

    /// Output directory, with the environment override applied.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.out.clone(),
        }
    }

    pub fn potential(&self) -> Result<Arc<PotentialSpec>> {
        Ok(Arc::new(self.potential.build()?))
    }

    pub fn t_end(&self, k: f64) -> f64 {
        self.t_end.unwrap_or(1.5 / k)
    }

    /// One context per `ε`, in config order.
    pub fn contexts(&self) -> Result<Vec<EpsilonContext>> {
        let spec = self.potential()?;
        self.eps
            .par_iter()
            .map(|&eps| EpsilonContext::build(spec.clone(), eps, ContextOptions::default()).map_err(|e| e.at_eps(eps)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    #[serde(rename = "trace_L1")]
    pub trace_l1: f64,
    pub trace_sup: f64,
    pub rate_obs: f64,
    pub rate_ratio: f64,
    pub watson: f64,
    /// Time-median of [`affine_deviation`].
    pub affine_dev: f64,
    #[serde(rename = "J_eps")]
    pub j_eps: f64,
    #[serde(rename = "A_eps")]
    pub a_eps: f64,
}

/// The `ε = 0` reference: rate constant and the dissipation of the limit
/// solution, `J₀ = E₀(0) − E₀(T)` (the limit action vanishes on solutions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitRow {
    pub k: f64,
    pub rate: f64,
    #[serde(rename = "J0")]
    pub j0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub t_end: f64,
    pub rows: Vec<ConvergenceRow>,
    pub limit: LimitRow,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.eps, r.trace_l1, r.trace_sup, r.rate_obs, r.rate_ratio, r.watson, r.affine_dev, r.j_eps, r.a_eps
            ));
        }
        s
    }

    /// Writes `report.csv` and/or `report.json` into `dir`.
    pub fn write(&self, dir: &Path, format: &ReportFormat) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = vec![];
        if format.csv {
            let p = dir.join("report.csv");
            std::fs::write(&p, self.to_csv())?;
            written.push(p);
        }
        if format.json {
            let p = dir.join("report.json");
            let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(&p, text)?;
            written.push(p);
        }
        Ok(written)
    }
}

/// `max_s |û − affine interpolant of û(±κ)| / max_s û` at every stamp.
pub fn affine_deviation(traj: &Trajectory) -> Vec<f64> {
    let nodes = &traj.grid.nodes;
    let (s0, s1) = (nodes[0], nodes[nodes.len() - 1]);
    traj.values
        .iter()
        .map(|u| {
            let (a, b) = (u[0], u[u.len() - 1]);
            let dev = nodes
                .iter()
                .zip(u)
                .map(|(s, v)| (v - (a + (b - a) * (s - s0) / (s1 - s0))).abs())
                .fold(0.0, f64::max);
            let top = u.iter().copied().fold(0.0, f64::max);
            if top > 0.0 {
                dev / top
            } else {
                0.0
            }
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Decay rate of `|y − m|` by least squares on the logarithm over
/// `t ≥ t_min`. NaN when fewer than two usable points remain.
pub fn fit_rate(times: &[f64], y: &[f64], m: f64, t_min: f64) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(y)
        .filter(|(t, v)| **t >= t_min && (**v - m).abs() > 0.0)
        .map(|(t, v)| (*t, (v - m).abs().ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    -sxy / sxx
}

/// Everything one sweep entry produces.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub row: ConvergenceRow,
    /// Extrapolated trajectory on the recorded stamps.
    pub trajectory: Trajectory,
}

/// Solves at one `ε` and compares with the limit equation.
pub fn sweep_entry(ctx: &EpsilonContext, cfg: &RunConfig) -> Result<SweepRun> {
    let k = ctx.k();
    let t_end = cfg.t_end(k);
    let grid = Arc::new(Grid::s_space(ctx, cfg.nodes)?);
    let init = InitialData::parse(&cfg.init)?;
    let u0 = Field::from_initial(grid.clone(), &init)?;
    let every = cfg.steps / cfg.stamps;

    // the coarsest run also streams the action over every step
    let mut acc = ActionAccumulator::new(MASS_TOL);
    let mut failure = None;
    let dt = t_end / cfg.steps as f64;
    let base = integrate(grid.clone(), ctx.eps(), &u0.values, t_end, cfg.steps, every, |n, u| {
        if failure.is_none() {
            if let Err(e) = acc.push(&grid, n as f64 * dt, u) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let action = acc.finish();
    let mut runs = vec![base];
    for level in 1..cfg.extrapolation {
        let f = 1 << level;
        runs.push(integrate(grid.clone(), ctx.eps(), &u0.values, t_end, cfg.steps * f, every * f, |_, _| {})?);
    }
    let traj = richardson(&runs)?;

    let last = u0.values.len() - 1;
    let (um0, up0) = (u0.values[0], u0.values[last]);
    let limit = solve_limit(um0, up0, k, t_end, traj.len() - 1)?;
    let err: Vec<f64> = traj
        .values
        .iter()
        .enumerate()
        .map(|(n, u)| (u[0] - limit.um[n]).abs() + (u[last] - limit.up[n]).abs())
        .collect();
    let trace_l1 = traj.times.windows(2).zip(err.windows(2)).map(|(t, e)| 0.5 * (t[1] - t[0]) * (e[0] + e[1])).sum();
    let trace_sup = err.iter().copied().fold(0.0, f64::max);
    let um: Vec<f64> = traj.values.iter().map(|u| u[0]).collect();
    let rate_obs = fit_rate(&traj.times, &um, 0.5 * (um0 + up0), 0.2 / k);
    let row = ConvergenceRow {
        eps: ctx.eps(),
        trace_l1,
        trace_sup,
        rate_obs,
        rate_ratio: rate_obs / (2.0 * k),
        watson: ctx.watson_ratio(),
        affine_dev: median(&affine_deviation(&traj)),
        j_eps: action.j,
        a_eps: action.a,
    };
    Ok(SweepRun { row, trajectory: traj })
}

/// Runs every `ε` of the config in parallel; rows sorted by `ε` descending.
pub fn converge_sweep(cfg: &RunConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let spec = cfg.potential()?;
    let k = reaction_constants(&spec)?.k;
    let contexts = cfg.contexts()?;
    let mut rows = contexts
        .par_iter()
        .map(|ctx| sweep_entry(ctx, cfg).map(|r| r.row).map_err(|e| e.at_eps(ctx.eps())))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));

    let t_end = cfg.t_end(k);
    let init = InitialData::parse(&cfg.init)?;
    let ends = init.sample(&[-1.0 / k, 1.0 / k])?;
    let start = LimitState::new(ends[0], ends[1])?;
    let lim = solve_limit(start.um, start.up, k, t_end, 1)?;
    let j0 = entropy0(start) - entropy0(lim.state(1));
    Ok(ConvergenceReport { t_end, rows, limit: LimitRow { k, rate: 2.0 * k, j0 } })
}

/// Particle histograms next to the Fokker–Planck solution from the same
/// initial law.
#[derive(Debug, Clone)]
pub struct ParticleStudy {
    pub run: ParticleRun,
    /// `(t, W₁(empirical, FP))` per snapshot.
    pub w1: Vec<(f64, f64)>,
}

/// Simulates particles started from `u₀γ_ε` and compares every snapshot
/// with an implicit Euler solve in `ξ` on `fp_nodes` nodes and `fp_steps`
/// steps, taken at the nearest solver step.
pub fn particle_study(
    ctx: &EpsilonContext,
    init: &InitialData,
    cfg: &ParticleConfig,
    fp_nodes: usize,
    fp_steps: usize,
) -> Result<ParticleStudy> {
    let grid = Arc::new(Grid::xi_space(ctx, fp_nodes)?);
    let u0 = Field::from_initial(grid.clone(), init)?;
    let run = simulate(ctx, &ParticleInit::Density(u0.clone()), cfg)?;
    let dt = cfg.t_end / fp_steps as f64;
    let wanted: Vec<usize> = run.snapshots.iter().map(|h| (h.t / dt).round() as usize).collect();
    let mut fields = vec![None; wanted.len()];
    integrate(grid.clone(), ctx.eps(), &u0.values, cfg.t_end, fp_steps, fp_steps, |n, u| {
        for (slot, &w) in fields.iter_mut().zip(&wanted) {
            if w == n {
                *slot = Some(u.to_vec());
            }
        }
    })?;
    let w1 = run
        .snapshots
        .iter()
        .zip(fields)
        .map(|(h, u)| {
            let u = u.ok_or_else(|| Error::InvalidInput(format!("snapshot at t = {} beyond the solve", h.t)))?;
            Ok((h.t, empirical_distance(h, &Field::new(grid.clone(), u)?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParticleStudy { run, w1 })
}
