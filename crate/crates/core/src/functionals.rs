//! Free energy, flux reconstruction, dissipation and action along discrete
//! curves.
//!
//! The flux is never obtained by differentiating a velocity: it is the
//! cumulative sum of cell-mass changes, so the discrete continuity equation
//! holds to round-off. Positive flux moves mass toward larger coordinates.
//!
//! Per time step `[t_n, t_{n+1}]` with midpoint state `ū = (uⁿ + uⁿ⁺¹)/2`:
//!
//! * kinetic: `Δt Σ_f ½ ŵ_f² R_f Λ(ū_i, ū_{i+1})` where `Λ` is the inverse
//!   logarithmic mean (the face value of `1/u`);
//! * slope: `Δt Σ_f 2 (δ√u)² / R_f`, Simpson's rule in time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fp_solver::{Field, Grid, Trajectory};

/// Densities at or below this value count as zero.
pub const FLOOR: f64 = 1e-300;
/// Default relative mass-drift tolerance for flux reconstruction.
pub const MASS_TOL: f64 = 1e-10;

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `Σ_i M_i u_i log u_i − m log m`.
pub fn entropy_of(grid: &Grid, u: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut m = 0.0;
    for (w, &v) in grid.cell_mass.iter().zip(u) {
        acc += w * xlogx(v);
        m += w * v;
    }
    acc - xlogx(m)
}

/// Relative entropy of a field with respect to its reference measure.
pub fn entropy(field: &Field) -> f64 {
    entropy_of(&field.grid, &field.values)
}

/// `1 / logmean(a, b) = (ln b − ln a) / (b − a)`, stable for `a ≈ b`.
pub fn inv_log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return f64::INFINITY;
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let x = (hi - lo) / lo;
    if x == 0.0 {
        1.0 / lo
    } else {
        x.ln_1p() / (hi - lo)
    }
}

/// Face fluxes over one time interval.
#[derive(Debug, Clone, Serialize)]
pub struct FluxField {
    pub t_start: f64,
    pub t_end: f64,
    /// Flux through each interior face (`n − 1` values); the walls carry 0.
    pub faces: Vec<f64>,
}

impl FluxField {
    /// Flux at nodes: walls are 0, interior nodes average adjacent faces.
    pub fn node_values(&self) -> Vec<f64> {
        let n = self.faces.len() + 1;
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = 0.5 * (self.faces[i - 1] + self.faces[i]);
        }
        out
    }
}

/// Face fluxes for one step from cumulative mass differences. Fails if the
/// mass leaving through the right wall exceeds `tol` relative to the mass.
pub fn step_flux(grid: &Grid, u0: &[f64], u1: &[f64], dt: f64, tol: f64) -> Result<Vec<f64>> {
    let n = grid.len();
    let mut faces = Vec::with_capacity(n - 1);
    let mut cum = 0.0;
    let mut scale = 0.0;
    for i in 0..n {
        let dm = grid.cell_mass[i] * (u1[i] - u0[i]);
        cum += dm;
        scale += grid.cell_mass[i] * u0[i].max(u1[i]);
        if i + 1 < n {
            faces.push(-cum / dt);
        }
    }
    if cum.abs() > tol * scale.max(FLOOR) {
        return Err(Error::MassDrift { drift: cum / scale.max(FLOOR), tol });
    }
    Ok(faces)
}

/// Flux fields for every interval of the trajectory.
pub fn flux_reconstruct(traj: &Trajectory) -> Result<Vec<FluxField>> {
    flux_reconstruct_with(traj, MASS_TOL)
}

pub fn flux_reconstruct_with(traj: &Trajectory, tol: f64) -> Result<Vec<FluxField>> {
    if traj.len() < 2 {
        return Err(Error::InvalidInput("flux needs at least two stamps".into()));
    }
    (0..traj.len() - 1)
        .map(|n| {
            let (t0, t1) = (traj.times[n], traj.times[n + 1]);
            let faces = step_flux(&traj.grid, &traj.values[n], &traj.values[n + 1], t1 - t0, tol)?;
            Ok(FluxField { t_start: t0, t_end: t1, faces })
        })
        .collect()
}

fn slope_rate(grid: &Grid, u: &[f64]) -> f64 {
    u.windows(2)
        .zip(&grid.face_resistance)
        .map(|(w, r)| {
            let d = w[1].max(0.0).sqrt() - w[0].max(0.0).sqrt();
            2.0 * d * d / r
        })
        .sum()
}

/// Kinetic and slope contributions of one step.
pub fn step_dissipation(grid: &Grid, u0: &[f64], u1: &[f64], dt: f64, faces: &[f64]) -> (f64, f64) {
    let mid: Vec<f64> = u0.iter().zip(u1).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut kinetic = 0.0;
    for (f, (&w, &r)) in faces.iter().zip(&grid.face_resistance).enumerate() {
        let (a, b) = (mid[f], mid[f + 1]);
        if a <= FLOOR || b <= FLOOR {
            if w.abs() <= FLOOR {
                continue;
            }
            return (f64::INFINITY, f64::NAN);
        }
        kinetic += 0.5 * w * w * r * inv_log_mean(a, b);
    }
    let slope = (slope_rate(grid, u0) + 4.0 * slope_rate(grid, &mid) + slope_rate(grid, u1)) / 6.0;
    (kinetic * dt, slope * dt)
}

/// Kinetic and slope parts of the dissipation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dissipation {
    pub kinetic: f64,
    pub slope: f64,
}

impl Dissipation {
    pub fn total(&self) -> f64 {
        self.kinetic + self.slope
    }

    pub fn is_infinite(&self) -> bool {
        self.kinetic.is_infinite()
    }
}

/// Energy at both ends together with the dissipation and the action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionBreakdown {
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub kinetic: f64,
    pub slope: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

/// Streaming accumulator so long solves need not be stored.
#[derive(Debug, Clone)]
pub struct ActionAccumulator {
    tol: f64,
    entropy_start: Option<f64>,
    entropy_end: f64,
    kinetic: f64,
    slope: f64,
    prev: Option<(f64, Vec<f64>)>,
}

impl ActionAccumulator {
    pub fn new(tol: f64) -> Self {
        Self { tol, entropy_start: None, entropy_end: 0.0, kinetic: 0.0, slope: 0.0, prev: None }
    }

    /// Feeds the state at time `t`; stamps must arrive in increasing order.
    pub fn push(&mut self, grid: &Grid, t: f64, u: &[f64]) -> Result<()> {
        let e = entropy_of(grid, u);
        if self.entropy_start.is_none() {
            self.entropy_start = Some(e);
        }
        self.entropy_end = e;
        if let Some((t0, u0)) = &self.prev {
            let dt = t - t0;
            let faces = step_flux(grid, u0, u, dt, self.tol)?;
            let (k, s) = step_dissipation(grid, u0, u, dt, &faces);
            self.kinetic += k;
            self.slope += s;
        }
        match &mut self.prev {
            Some((t0, u0)) => {
                *t0 = t;
                u0.copy_from_slice(u);
            }
            None => self.prev = Some((t, u.to_vec())),
        }
        Ok(())
    }

    pub fn finish(&self) -> ActionBreakdown {
        let start = self.entropy_start.unwrap_or(0.0);
        let j = if self.kinetic.is_infinite() { f64::INFINITY } else { self.kinetic + self.slope };
        ActionBreakdown {
            entropy_start: start,
            entropy_end: self.entropy_end,
            kinetic: self.kinetic,
            slope: self.slope,
            j,
            a: self.entropy_end - start + j,
        }
    }
}

/// Dissipation of a trajectory.
pub fn dissipation(traj: &Trajectory) -> Result<Dissipation> {
    dissipation_with(traj, MASS_TOL)
}

pub fn dissipation_with(traj: &Trajectory, tol: f64) -> Result<Dissipation> {
    let b = action_with(traj, tol)?;
    Ok(Dissipation { kinetic: b.kinetic, slope: b.slope })
}

/// Action breakdown of a trajectory.
pub fn action(traj: &Trajectory) -> Result<ActionBreakdown> {
    action_with(traj, MASS_TOL)
}

pub fn action_with(traj: &Trajectory, tol: f64) -> Result<ActionBreakdown> {
    if traj.len() < 2 {
        return Err(Error::InvalidInput("action needs at least two stamps".into()));
    }
    let mut acc = ActionAccumulator::new(tol);
    for (t, u) in traj.times.iter().zip(&traj.values) {
        acc.push(&traj.grid, *t, u)?;
    }
    Ok(acc.finish())
}
