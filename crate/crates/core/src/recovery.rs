//! Recovery sequence for a limit curve `u±(t)`.
//!
//! The curve is pulled away from zero by the affine clamp
//! `y± = m + (1−η)(u± − m)`, smoothed in time, lifted to `s ∈ [−κ, κ]` by
//! the minimisers of `M`, and finally shifted by a constant per stamp so the
//! field carries the exact `γ̂_ε`-mass `m`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_solver::{Grid, Trajectory};
use crate::functionals::{action_with, entropy_of, ActionBreakdown};
use crate::limit_system::{dissipation0, entropy0, LimitTrajectory};
use crate::measures::EpsilonContext;
use crate::micro_m::interpolate_time;

/// Relative tolerance on the constant mass of an input curve.
const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    /// Clamp strength `η ∈ [0, 1)`.
    pub eta: f64,
    /// Standard deviation of the time mollifier.
    pub width: f64,
    pub eps_list: Vec<f64>,
    /// Nodes of the uniform `s`-grid.
    pub nodes: usize,
    /// Optional budget for every reported gap.
    pub target_gap: Option<f64>,
    /// Replace `eta` and `width` per `ε` by `(ε⁴/10, ε/20)`, so the
    /// regularisation vanishes along the sweep together with `ε`.
    pub diagonal: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self { eta: 1e-3, width: 0.01, eps_list: vec![0.2, 0.12, 0.08, 0.05], nodes: 401, target_gap: None, diagonal: true }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::InvalidInput(format!("eta must lie in [0, 1), got {}", self.eta)));
        }
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidInput(format!("mollifier width must be positive, got {}", self.width)));
        }
        if self.nodes < 3 {
            return Err(Error::InvalidInput("recovery grid needs at least 3 nodes".into()));
        }
        Ok(())
    }

    /// The settings actually used at `eps`.
    pub fn at(&self, eps: f64) -> Self {
        let mut c = self.clone();
        if self.diagonal {
            c.eta = eps.powi(4) / 10.0;
            c.width = eps / 20.0;
        }
        c
    }
}

/// Limit-equation solution from `(1.6, 0.4)` on `[0, 1]`: the default
/// test curve, positive so that `J₀` is finite on every interval.
pub fn reference_curve(k: f64, n_steps: usize) -> Result<LimitTrajectory> {
    crate::limit_system::solve_limit(1.6, 0.4, k, 1.0, n_steps)
}

fn curve_mass(curve: &LimitTrajectory) -> Result<f64> {
    let m = 0.5 * (curve.um[0] + curve.up[0]);
    for (a, b) in curve.um.iter().zip(&curve.up) {
        if (0.5 * (a + b) - m).abs() > MASS_TOL * m.abs().max(1.0) {
            return Err(Error::InvalidInput("curve mass is not constant".into()));
        }
    }
    Ok(m)
}

// u⁺ is rebuilt as 2m − u⁻ so the mass stays exact through every stage.
fn with_um(curve: &LimitTrajectory, m: f64, um: Vec<f64>) -> Result<LimitTrajectory> {
    let up = um.iter().map(|v| 2.0 * m - v).collect();
    LimitTrajectory::from_series(curve.times.clone(), um, up)
}

/// `y± = m + (1−η)(u± − m)`; values end up in `[ηm, (2−η)m]`.
pub fn clamp(curve: &LimitTrajectory, eta: f64) -> Result<LimitTrajectory> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidInput(format!("eta must lie in [0, 1), got {eta}")));
    }
    let m = curve_mass(curve)?;
    if eta == 0.0 {
        return Ok(curve.clone());
    }
    let um = curve.um.iter().map(|v| m + (1.0 - eta) * (v - m)).collect();
    with_um(curve, m, um)
}

/// Gaussian convolution in time after even reflection about both ends.
/// Quadrature weights are trapezoidal on the extended stamps, so every
/// output is a convex combination of inputs. The kernel narrows to a sixth
/// of the distance to the nearer end: a plain even extension has a kink
/// at the ends and would move the end values by `O(width)`.
pub fn mollify(times: &[f64], values: &[f64], width: f64) -> Vec<f64> {
    let n = times.len();
    if n < 2 || !(width > 0.0) {
        return values.to_vec();
    }
    let (t0, t1) = (times[0], times[n - 1]);
    let mut ext: Vec<(f64, f64)> = Vec::with_capacity(3 * n);
    ext.extend((1..n).rev().map(|j| (2.0 * t0 - times[j], values[j])));
    ext.extend(times.iter().copied().zip(values.iter().copied()));
    ext.extend((0..n - 1).rev().map(|j| (2.0 * t1 - times[j], values[j])));
    let q: Vec<f64> = (0..ext.len())
        .map(|j| {
            let l = if j > 0 { ext[j].0 - ext[j - 1].0 } else { 0.0 };
            let r = if j + 1 < ext.len() { ext[j + 1].0 - ext[j].0 } else { 0.0 };
            0.5 * (l + r)
        })
        .collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    times
        .iter()
        .zip(values)
        .map(|(&t, &y0)| {
            let sigma = width.min((t - t0).min(t1 - t) / 6.0);
            if sigma <= 0.0 {
                return y0;
            }
            let cut = 8.0 * sigma;
            let (mut num, mut den) = (0.0, 0.0);
            for ((x, y), w) in ext.iter().zip(&q) {
                let d = x - t;
                if d.abs() > cut {
                    continue;
                }
                let k = w * (-0.5 * (d / sigma).powi(2)).exp();
                num += k * y;
                den += k;
            }
            // a convex combination can still drift outside by an ulp
            (num / den).clamp(lo, hi)
        })
        .collect()
}

/// The clamped and mollified curve `ỹ±`.
pub fn regularize(curve: &LimitTrajectory, eta: f64, width: f64) -> Result<LimitTrajectory> {
    let y = clamp(curve, eta)?;
    let m = curve_mass(&y)?;
    let um = mollify(&y.times, &y.um, width);
    with_um(&y, m, um)
}

/// Recovery field for one `ε` with the pieces needed for the report.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub trajectory: Trajectory,
    pub smoothed: LimitTrajectory,
    /// Constant subtracted at each stamp.
    pub correction: Vec<f64>,
}

/// Builds `û = ỹ − m̃(t)` with `m̃ = ∫ỹ dγ̂_ε − ½(ỹ(−κ) + ỹ(κ))` on a
/// uniform `s`-grid. `cfg` is used as given; see [`RecoveryConfig::at`].
pub fn build_recovery(curve: &LimitTrajectory, ctx: &EpsilonContext, cfg: &RecoveryConfig) -> Result<Recovery> {
    cfg.validate()?;
    let smoothed = regularize(curve, cfg.eta, cfg.width)?;
    let floor = 1e-12 * curve_mass(&smoothed)?.abs().max(1e-300);
    let profile = interpolate_time(&smoothed.times, &smoothed.um, &smoothed.up, ctx.kappa(), floor)?;
    let grid = Arc::new(Grid::s_space(ctx, cfg.nodes)?);
    let mut values = profile.sample(&grid.nodes);
    let mut correction = Vec::with_capacity(values.len());
    for (n, u) in values.iter_mut().enumerate() {
        let limit_mass = 0.5 * (smoothed.um[n] + smoothed.up[n]);
        let shift = grid.mass_of(u) - limit_mass;
        for (i, v) in u.iter_mut().enumerate() {
            *v -= shift;
            if *v < 0.0 {
                return Err(Error::NegativeDensity { node: i, value: *v });
            }
        }
        correction.push(shift);
    }
    let dt = smoothed.times[1] - smoothed.times[0];
    let trajectory = Trajectory { grid, eps: ctx.eps(), times: smoothed.times.clone(), values, dt };
    Ok(Recovery { trajectory, smoothed, correction })
}

fn trapezoid(t: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    t.windows(2).enumerate().map(|(n, p)| 0.5 * (p[1] - p[0]) * (f(n) + f(n + 1))).sum()
}

/// Achieved gaps for one `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub eps: f64,
    #[serde(rename = "traceL1")]
    pub trace_l1: f64,
    #[serde(rename = "J_eps")]
    pub j_eps: f64,
    #[serde(rename = "J0")]
    pub j0: f64,
    #[serde(rename = "E_start_gap")]
    pub e_start_gap: f64,
    #[serde(rename = "E_end_gap")]
    pub e_end_gap: f64,
    pub within_target: Option<bool>,
}

impl RecoveryReport {
    pub fn j_gap(&self) -> f64 {
        (self.j_eps - self.j0).abs()
    }
}

/// Gaps of `rec` against the original curve `u±`. Mass is exact, so the
/// flux reconstruction runs with a tight tolerance.
pub fn report(curve: &LimitTrajectory, rec: &Recovery, kappa: f64, target: Option<f64>) -> Result<RecoveryReport> {
    let traj = &rec.trajectory;
    let breakdown: ActionBreakdown = action_with(traj, 1e-9)?;
    let j0 = dissipation0(curve, kappa)?;
    let trace_l1 = trapezoid(&traj.times, |n| {
        let u = &traj.values[n];
        (u[0] - curve.um[n]).abs() + (u[u.len() - 1] - curve.up[n]).abs()
    });
    let last = curve.len() - 1;
    let e_start_gap = (entropy_of(&traj.grid, &traj.values[0]) - entropy0(curve.state(0))).abs();
    let e_end_gap = (entropy_of(&traj.grid, &traj.values[last]) - entropy0(curve.state(last))).abs();
    let mut r = RecoveryReport {
        eps: traj.eps,
        trace_l1,
        j_eps: breakdown.j,
        j0,
        e_start_gap,
        e_end_gap,
        within_target: None,
    };
    r.within_target = target.map(|d| r.trace_l1 <= d && r.j_gap() <= d && e_start_gap <= d && e_end_gap <= d);
    Ok(r)
}

/// Builds and reports the recovery for every context, in order.
pub fn recovery_sweep(
    curve: &LimitTrajectory,
    contexts: &[EpsilonContext],
    cfg: &RecoveryConfig,
) -> Result<Vec<RecoveryReport>> {
    contexts
        .par_iter()
        .map(|ctx| {
            let rec = build_recovery(curve, ctx, &cfg.at(ctx.eps()))?;
            report(curve, &rec, ctx.kappa(), cfg.target_gap)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> LimitTrajectory {
        reference_curve(4.0 * 2f64.sqrt() / std::f64::consts::PI, 200).unwrap()
    }

    #[test]
    fn clamp_examples() {
        let c = curve();
        assert_eq!(clamp(&c, 0.0).unwrap().um, c.um);
        let flat = LimitTrajectory::from_series(vec![0.0, 1.0], vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let y = clamp(&flat, 0.1).unwrap();
        assert!(y.um.iter().all(|v| (v - 0.1).abs() < 1e-15));
        let eq = LimitTrajectory::from_series(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(clamp(&eq, 0.3).unwrap().um, vec![1.0, 1.0]);
    }

    #[test]
    fn clamp_rejects_varying_mass() {
        let bad = LimitTrajectory { times: vec![0.0, 1.0], um: vec![1.0, 1.0], up: vec![1.0, 2.0], w: vec![0.0; 2] };
        assert!(clamp(&bad, 0.1).is_err());
    }

    #[test]
    fn mollify_keeps_constants_and_bounds() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.02).collect();
        assert!(mollify(&t, &[3.0; 50], 0.05).iter().all(|v| *v == 3.0));
        let y: Vec<f64> = t.iter().map(|x| (7.0 * x).sin()).collect();
        let z = mollify(&t, &y, 0.05);
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(z.iter().all(|v| *v >= lo && *v <= hi));
    }

    #[test]
    fn constant_curve_recovers_constant_field() {
        let ctx = EpsilonContext::default_for(0.2).unwrap();
        let c = LimitTrajectory::from_series(vec![0.0, 0.5, 1.0], vec![1.0; 3], vec![1.0; 3]).unwrap();
        let rec = build_recovery(&c, &ctx, &RecoveryConfig { nodes: 101, ..Default::default() }).unwrap();
        for u in &rec.trajectory.values {
            assert!(u.iter().all(|v| (v - 1.0).abs() < 1e-13));
        }
        let r = report(&c, &rec, ctx.kappa(), None).unwrap();
        assert!(r.j_eps.abs() < 1e-20 && r.e_start_gap < 1e-13);
    }

    #[test]
    fn recovery_mass_is_exact() {
        let ctx = EpsilonContext::default_for(0.1).unwrap();
        let c = curve();
        let rec = build_recovery(&c, &ctx, &RecoveryConfig::default()).unwrap();
        for n in 0..rec.trajectory.len() {
            assert!((rec.trajectory.mass(n) - 1.0).abs() < 1e-12);
        }
    }
}
