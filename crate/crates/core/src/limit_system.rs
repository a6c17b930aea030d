//! The two-state limit: `u̇⁻ = k(u⁺ − u⁻)`, `u̇⁺ = −u̇⁻`, its entropy
//! `E₀`, dissipation `J₀ = ∫ M(w; u±) dt` and action `A₀`.
//!
//! Convention: `w = ½u̇⁻ = −½u̇⁺`, and the chain-rule bound reads
//! `w (log u⁺ − log u⁻) ≤ M(w; u±)`, tight exactly on `w = k(u⁺ − u⁻)/2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::inv_log_mean;
use crate::micro_m::m_value;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitState {
    pub um: f64,
    pub up: f64,
}

impl LimitState {
    pub fn new(um: f64, up: f64) -> Result<Self> {
        if !(um >= 0.0 && up >= 0.0) || !um.is_finite() || !up.is_finite() {
            return Err(Error::InvalidInput(format!("well densities must be non-negative, got ({um}, {up})")));
        }
        Ok(Self { um, up })
    }

    /// `m = ½(u⁻ + u⁺)`.
    pub fn mass(&self) -> f64 {
        0.5 * (self.um + self.up)
    }

    /// `log u⁺ − log u⁻`.
    pub fn log_ratio(&self) -> f64 {
        self.up.ln() - self.um.ln()
    }
}

#[derive(Debug, Clone)]
pub struct LimitTrajectory {
    pub times: Vec<f64>,
    pub um: Vec<f64>,
    pub up: Vec<f64>,
    /// `w = ½u̇⁻` at each stamp.
    pub w: Vec<f64>,
}

impl LimitTrajectory {
    /// Wraps sampled well densities; `w` from second-order differences.
    pub fn from_series(times: Vec<f64>, um: Vec<f64>, up: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != um.len() || times.len() != up.len() {
            return Err(Error::InvalidInput("limit path needs ≥ 2 stamps of equal length".into()));
        }
        if times.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("time stamps must increase".into()));
        }
        let m0 = 0.5 * (um[0] + up[0]);
        for (a, b) in um.iter().zip(&up) {
            LimitState::new(*a, *b)?;
            if (0.5 * (a + b) - m0).abs() > 1e-12 * m0.max(1.0) {
                return Err(Error::InvalidInput("limit path does not conserve mass".into()));
            }
        }
        let w = crate::micro_m::time_derivative(&times, &um).into_iter().map(|d| 0.5 * d).collect();
        Ok(Self { times, um, up, w })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, n: usize) -> LimitState {
        LimitState { um: self.um[n], up: self.up[n] }
    }

    /// Restriction to stamps `from..`.
    pub fn tail(&self, from: usize) -> Self {
        Self {
            times: self.times[from..].to_vec(),
            um: self.um[from..].to_vec(),
            up: self.up[from..].to_vec(),
            w: self.w[from..].to_vec(),
        }
    }
}

/// Closed-form solution `u⁻(t) = m + (u⁻₀ − m) e^{−2kt}` on `n_steps + 1`
/// uniform stamps of `[0, T]`.
pub fn solve_limit(um0: f64, up0: f64, k: f64, t_end: f64, n_steps: usize) -> Result<LimitTrajectory> {
    LimitState::new(um0, up0)?;
    if !(k > 0.0) || !(t_end > 0.0) || n_steps == 0 {
        return Err(Error::InvalidInput("need k > 0, T > 0 and at least one step".into()));
    }
    let m = 0.5 * (um0 + up0);
    let d0 = um0 - m;
    let mut traj = LimitTrajectory { times: vec![], um: vec![], up: vec![], w: vec![] };
    for n in 0..=n_steps {
        let t = if n == n_steps { t_end } else { t_end * n as f64 / n_steps as f64 };
        let d = d0 * (-2.0 * k * t).exp();
        // u⁺ − u⁻ = −2d
        traj.times.push(t);
        traj.um.push(m + d);
        traj.up.push(m - d);
        traj.w.push(-k * d);
    }
    Ok(traj)
}

/// Classical RK4 for the same ODE; used to cross-check the closed form.
pub fn solve_limit_rk4(um0: f64, up0: f64, k: f64, t_end: f64, n_steps: usize) -> Vec<(f64, f64)> {
    let f = |um: f64, up: f64| (k * (up - um), k * (um - up));
    let dt = t_end / n_steps as f64;
    let (mut a, mut b) = (um0, up0);
    let mut out = vec![(a, b)];
    for _ in 0..n_steps {
        let k1 = f(a, b);
        let k2 = f(a + 0.5 * dt * k1.0, b + 0.5 * dt * k1.1);
        let k3 = f(a + 0.5 * dt * k2.0, b + 0.5 * dt * k2.1);
        let k4 = f(a + dt * k3.0, b + dt * k3.1);
        a += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        b += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        out.push((a, b));
    }
    out
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `E₀ = ½(u⁺ log u⁺ + u⁻ log u⁻) − m log m`.
pub fn entropy0(state: LimitState) -> f64 {
    0.5 * (xlogx(state.up) + xlogx(state.um)) - xlogx(state.mass())
}

/// `M(w; u±)` extended to zero boundary values: finite only when `w = 0`.
fn m_extended(w: f64, s: LimitState, kappa: f64) -> Result<f64> {
    if s.um > 0.0 && s.up > 0.0 {
        return m_value(w, s.um, s.up, kappa);
    }
    if w == 0.0 {
        return Ok((s.up.sqrt() - s.um.sqrt()).powi(2) / kappa);
    }
    Ok(f64::INFINITY)
}

/// `J₀ = ∫ M(w; u±) dt`. On each interval `w` is the difference quotient
/// `½Δu⁻/Δt` and `M` is averaged over the two end states (trapezoid).
pub fn dissipation0(traj: &LimitTrajectory, kappa: f64) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..traj.len() - 1 {
        let dt = traj.times[n + 1] - traj.times[n];
        let w = 0.5 * (traj.um[n + 1] - traj.um[n]) / dt;
        let a = m_extended(w, traj.state(n), kappa)?;
        let b = m_extended(w, traj.state(n + 1), kappa)?;
        total += 0.5 * dt * (a + b);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitAction {
    pub entropy_start: f64,
    pub entropy_end: f64,
    #[serde(rename = "J0")]
    pub j0: f64,
    #[serde(rename = "A0")]
    pub a0: f64,
}

/// `A₀ = E₀(end) − E₀(start) + J₀`.
pub fn action0(traj: &LimitTrajectory, kappa: f64) -> Result<LimitAction> {
    let entropy_start = entropy0(traj.state(0));
    let entropy_end = entropy0(traj.state(traj.len() - 1));
    let j0 = dissipation0(traj, kappa)?;
    Ok(LimitAction { entropy_start, entropy_end, j0, a0: entropy_end - entropy_start + j0 })
}

/// `M(w; u±) − w (log u⁺ − log u⁻) ≥ 0`, zero exactly on the contact line.
pub fn contact_residual(state: LimitState, w: f64, kappa: f64) -> Result<f64> {
    Ok(m_value(w, state.um, state.up, kappa)? - w * state.log_ratio())
}

/// `ψ₀(w; u±) = (1/k) (log u⁺ − log u⁻)/(u⁺ − u⁻) w²`.
pub fn psi0(w: f64, state: LimitState, k: f64) -> f64 {
    inv_log_mean(state.um, state.up) * w * w / k
}

/// `w` minimising `ψ₀(w) − w (log u⁺ − log u⁻)`, found from the
/// stationarity condition `2w Λ/k = log u⁺ − log u⁻`.
pub fn psi0_flux(state: LimitState, k: f64) -> f64 {
    let lambda = inv_log_mean(state.um, state.up);
    k * state.log_ratio() / (2.0 * lambda)
}

/// `u̇⁻ = 2w` for the minimising flux, which simplifies to `k(u⁺ − u⁻)`.
pub fn psi0_rate(state: LimitState, k: f64) -> f64 {
    k * (state.up - state.um)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{default_potential, reaction_constants};

    #[test]
    fn closed_form_and_rk4_agree() {
        let k = 1.8;
        let traj = solve_limit(2.0, 0.0, k, 1.0, 1000).unwrap();
        let rk = solve_limit_rk4(2.0, 0.0, k, 1.0, 1000);
        for (n, (a, b)) in rk.iter().enumerate() {
            assert!((traj.um[n] - a).abs() < 1e-10);
            assert!((traj.up[n] - b).abs() < 1e-10);
            assert!((traj.state(n).mass() - 1.0).abs() <= 1e-15);
        }
        let t = 0.37;
        let exact = 1.0 + (-2.0 * k * t).exp();
        let tr = solve_limit(2.0, 0.0, k, t, 1).unwrap();
        assert!((tr.um[1] - exact).abs() < 1e-15);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy0(LimitState { um: 1.0, up: 1.0 }), 0.0);
        assert!((entropy0(LimitState { um: 2.0, up: 0.0 }) - 2f64.ln()).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!(entropy0(LimitState { um: e, up: e }).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_has_zero_action() {
        let traj = solve_limit(1.0, 1.0, 1.0, 1.0, 10).unwrap();
        let a = action0(&traj, 1.0).unwrap();
        assert_eq!(a.j0, 0.0);
        assert_eq!(a.a0, 0.0);
    }

    #[test]
    fn solutions_have_vanishing_action() {
        let rc = reaction_constants(&default_potential()).unwrap();
        let traj = solve_limit(2.0, 0.0, rc.k, 1.0, 4000).unwrap();
        let a = action0(&traj.tail(40), rc.kappa).unwrap();
        assert!(a.a0 <= 1e-6 && a.a0 >= -1e-10, "{}", a.a0);
    }

    #[test]
    fn zero_density_needs_zero_flux() {
        let traj = LimitTrajectory::from_series(vec![0.0, 1.0], vec![2.0, 1.5], vec![0.0, 0.5]).unwrap();
        assert_eq!(dissipation0(&traj, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn contact_line() {
        let (k, kappa) = (2.0, 0.5);
        let s = LimitState { um: 0.4, up: 1.6 };
        let w_star = k * (s.up - s.um) / 2.0;
        assert!(contact_residual(s, w_star, kappa).unwrap().abs() < 1e-12);
        assert!(contact_residual(s, 0.0, kappa).unwrap() > 0.0);
        let r0 = contact_residual(s, w_star, kappa).unwrap();
        for f in [0.9, 1.1] {
            assert!(contact_residual(s, f * w_star, kappa).unwrap() > r0);
        }
    }

    #[test]
    fn psi0_reproduces_ode() {
        let s = LimitState { um: 2.0, up: 0.5 };
        assert_eq!(psi0_rate(s, 1.0), -1.5);
        assert!((2.0 * psi0_flux(s, 1.0) - psi0_rate(s, 1.0)).abs() < 1e-14);
        assert_eq!(psi0_rate(LimitState { um: 0.7, up: 0.7 }, 3.0), 0.0);
        // the minimiser beats nearby fluxes
        let obj = |w: f64| psi0(w, s, 1.0) - w * s.log_ratio();
        let w = psi0_flux(s, 1.0);
        assert!(obj(w) < obj(w + 1e-3) && obj(w) < obj(w - 1e-3));
    }

    #[test]
    fn path_must_conserve_mass() {
        assert!(LimitTrajectory::from_series(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.2]).is_err());
    }
}
