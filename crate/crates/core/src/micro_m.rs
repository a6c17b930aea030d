//! The cell problem
//!
//! ```text
//! M(w; u⁻, u⁺) = inf { ½ ∫_{−κ}^{κ} (w² + u′²)/u ds : u(±κ) = u± }
//! ```
//!
//! Its Euler–Lagrange equation in `z = √u` is `−z″ − w²/(4z³) = 0`, with
//! first integral `u′² = w² + 4Au`, so every critical point is a parabola
//! `u = As² + Bs + C` with `B² − 4AC = w²`. On such a parabola the
//! integrand collapses to `w²/u + 2A`, hence `M = w² ∫ds/u + 4Aκ`.
//!
//! Besides the closed form this module keeps two independent solvers used
//! as cross-checks: Newton on the finite-difference Euler–Lagrange
//! equation, and direct Newton minimisation of the discretised objective.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::inv_log_mean;
use crate::quadrature::{integrate_graded, GradedOptions};
use crate::tridiag::Tridiagonal;

/// Minimising profile `u(s) = As² + Bs + C` and the value `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MicroProfile {
    pub w: f64,
    pub um: f64,
    pub up: f64,
    pub kappa: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// `M(w; u±)`.
    #[serde(rename = "M")]
    pub value: f64,
}

impl MicroProfile {
    pub fn eval(&self, s: f64) -> f64 {
        (self.a * s + self.b) * s + self.c
    }

    pub fn derivative(&self, s: f64) -> f64 {
        2.0 * self.a * s + self.b
    }

    /// `B² − 4AC`, which equals `w²` for a critical point.
    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.a * self.c
    }

    /// `n` equally spaced samples `(s, u(s))` on `[−κ, κ]`.
    pub fn samples(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let s = if i == n - 1 { self.kappa } else { -self.kappa + 2.0 * self.kappa * i as f64 / (n - 1) as f64 };
                (s, if i == 0 { self.um } else if i == n - 1 { self.up } else { self.eval(s) })
            })
            .collect()
    }
}

fn check_inputs(w: f64, um: f64, up: f64, kappa: f64) -> Result<()> {
    if !(um > 0.0 && up > 0.0) || !um.is_finite() || !up.is_finite() {
        return Err(Error::InvalidInput(format!("boundary values must be positive, got u- = {um}, u+ = {up}")));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
    }
    if !w.is_finite() {
        return Err(Error::InvalidInput(format!("flux must be finite, got {w}")));
    }
    Ok(())
}

/// Minimum of `As² + Bs + C` on `[−κ, κ]`.
fn min_on_interval(a: f64, b: f64, c: f64, kappa: f64, um: f64, up: f64) -> f64 {
    let mut lo = um.min(up);
    if a > 0.0 {
        let v = -b / (2.0 * a);
        if v.abs() < kappa {
            lo = lo.min((a * v + b) * v + c);
        }
    }
    lo
}

/// `∫_{−κ}^{κ} ds / u` for a positive parabola with `B² − 4AC = w²`.
fn inverse_integral(a: f64, b: f64, c: f64, w: f64, kappa: f64, um: f64, up: f64) -> Result<f64> {
    let w = w.abs();
    if a == 0.0 {
        return Ok(2.0 * kappa * inv_log_mean(um, up));
    }
    if w == 0.0 {
        // u = z² with z affine
        return Ok(2.0 * kappa / (um * up).sqrt());
    }
    // L(s) = ln|(u′ − w)/(u′ + w)| with the small factor rewritten through
    // (u′ − w)(u′ + w) = 4Au, so that ln(4|A|) is tracked as a coefficient
    let log4a = (4.0 * a.abs()).ln();
    let piece = |s: f64, u: f64| -> (f64, f64) {
        let d = 2.0 * a * s + b;
        if d >= 0.0 {
            (u.ln() - 2.0 * (d + w).ln(), 1.0)
        } else {
            (2.0 * (w - d).ln() - u.ln(), -1.0)
        }
    };
    let (rest_p, coef_p) = piece(kappa, up);
    let (rest_m, coef_m) = piece(-kappa, um);
    let coef = coef_p - coef_m;
    let diff = (rest_p - rest_m) + coef * log4a;
    let scale = rest_p.abs() + rest_m.abs() + coef.abs() * log4a.abs();
    if diff.abs() > 1e-6 * scale {
        return Ok(diff / w);
    }
    // too much cancellation (nearly constant profiles): integrate directly
    let peak = if um <= up { -kappa } else { kappa };
    integrate_graded(
        |s| 1.0 / ((a * s + b) * s + c),
        -kappa,
        kappa,
        &[peak],
        GradedOptions { rel_tol: 1e-14, levels: 4, max_doublings: 8 },
    )
}

/// Closed-form minimiser of `M(w; u⁻, u⁺)` on `[−κ, κ]`.
pub fn minimize_profile(w: f64, um: f64, up: f64, kappa: f64) -> Result<MicroProfile> {
    check_inputs(w, um, up, kappa)?;
    let b = (up - um) / (2.0 * kappa);
    let mean = 0.5 * (up + um);
    let root = (um * up + kappa * kappa * w * w).sqrt();
    // both roots of 4κ²A² − 4m̄A + (B² − w²) = 0; the first is written in
    // cancellation-free form
    let candidates = [(b - w) * (b + w) / (2.0 * (mean + root)), (mean + root) / (2.0 * kappa * kappa)];
    let mut best: Option<MicroProfile> = None;
    let mut failure = None;
    for a in candidates {
        let c = mean - a * kappa * kappa;
        if min_on_interval(a, b, c, kappa, um, up) <= 0.0 {
            continue;
        }
        // a parabola that nearly touches zero can defeat the quadrature;
        // fall back to the other root then
        let integral = match inverse_integral(a, b, c, w, kappa, um, up) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                continue;
            }
        };
        let value = w * w * integral + 4.0 * a * kappa;
        if best.is_none_or(|p| value < p.value) {
            best = Some(MicroProfile { w, um, up, kappa, a, b, c, value: value.max(0.0) });
        }
    }
    match (best, failure) {
        (Some(p), _) => Ok(p),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::InvalidInput(format!("no positive critical profile for w = {w}, u± = ({um}, {up})"))),
    }
}

/// `M(w; u⁻, u⁺)`.
pub fn m_value(w: f64, um: f64, up: f64, kappa: f64) -> Result<f64> {
    minimize_profile(w, um, up, kappa).map(|p| p.value)
}

/// Two-sided estimate `w ℓ ≤ M ≤ ℓ (4κ²w² + (u⁺ − u⁻)²) / (4κ (u⁺ − u⁻))`
/// with `ℓ = log u⁺ − log u⁻`; equal to `M` iff `w = (u⁺ − u⁻)/2κ`.
pub fn m_bounds(w: f64, um: f64, up: f64, kappa: f64) -> Result<(f64, f64)> {
    check_inputs(w, um, up, kappa)?;
    let ell = up.ln() - um.ln();
    let du = up - um;
    let lower = w * ell;
    let upper = inv_log_mean(um, up) * (4.0 * kappa * kappa * w * w + du * du) / (4.0 * kappa);
    Ok((lower, upper))
}

/// Newton's method on the finite-difference form of `−z″ − w²/(4z³) = 0`
/// with `n` cells, started from the affine interpolant of `√u±`. Returns
/// the discrete objective and the nodal values of `u = z²`.
pub fn newton_bvp(w: f64, um: f64, up: f64, kappa: f64, n: usize) -> Result<(f64, Vec<f64>)> {
    check_inputs(w, um, up, kappa)?;
    if n < 4 {
        return Err(Error::InvalidInput("newton_bvp needs at least 4 cells".into()));
    }
    let h = 2.0 * kappa / n as f64;
    let (za, zb) = (um.sqrt(), up.sqrt());
    let mut z: Vec<f64> = (0..=n).map(|i| za + (zb - za) * i as f64 / n as f64).collect();
    let q = 0.25 * w * w;
    let residual = |z: &[f64]| -> Vec<f64> {
        (1..n).map(|i| -(z[i - 1] - 2.0 * z[i] + z[i + 1]) / (h * h) - q / z[i].powi(3)).collect()
    };
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = residual(&z);
    let scale = 1.0 / (h * h) * za.max(zb);
    for _ in 0..100 {
        let rn = norm(&r);
        if rn <= 1e-12 * scale * (n as f64).sqrt() {
            let u: Vec<f64> = z.iter().map(|v| v * v).collect();
            return Ok((z_objective(w, &z, h), u));
        }
        let mut jac = Tridiagonal::zeros(n - 1);
        for k in 0..n - 1 {
            jac.diag[k] = 2.0 / (h * h) + 3.0 * q / z[k + 1].powi(4);
            jac.lower[k] = -1.0 / (h * h);
            jac.upper[k] = -1.0 / (h * h);
        }
        let step = jac.solve(&r)?;
        let mut lambda = 1.0;
        loop {
            let mut trial = z.clone();
            for k in 0..n - 1 {
                trial[k + 1] -= lambda * step[k];
            }
            if trial.iter().all(|v| *v > 0.0) {
                let rt = residual(&trial);
                if norm(&rt) < rn || lambda < 1e-3 {
                    z = trial;
                    r = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return Err(Error::Newton(n));
            }
        }
    }
    Err(Error::Newton(n))
}

/// `Σ 2(δz)²/h + trapezoid of w²/(2z²)`: the objective in `z = √u`.
fn z_objective(w: f64, z: &[f64], h: f64) -> f64 {
    let n = z.len() - 1;
    let grad: f64 = z.windows(2).map(|p| 2.0 * (p[1] - p[0]).powi(2) / h).sum();
    let pot: f64 = (0..=n)
        .map(|i| {
            let wt = if i == 0 || i == n { 0.5 } else { 1.0 };
            wt * h * w * w / (2.0 * z[i] * z[i])
        })
        .sum();
    grad + pot
}

/// Direct minimisation of `Σ_i (w²h² + (δu)²) / (h (u_i + u_{i+1}))`, the
/// midpoint discretisation of the objective over piecewise-linear `u` with
/// `n` cells. Damped Newton with the exact tridiagonal Hessian.
pub fn brute_force_m(w: f64, um: f64, up: f64, kappa: f64, n: usize) -> Result<f64> {
    check_inputs(w, um, up, kappa)?;
    if n < 16 {
        return Err(Error::InvalidInput("brute_force_m needs at least 16 cells".into()));
    }
    let h = 2.0 * kappa / n as f64;
    let nn = w * w * h * h;
    let objective = |u: &[f64]| -> f64 {
        u.windows(2).map(|p| (nn + (p[1] - p[0]).powi(2)) / (h * (p[0] + p[1]))).sum()
    };
    let mut u: Vec<f64> = (0..=n).map(|i| um + (up - um) * i as f64 / n as f64).collect();
    let mut f = objective(&u);
    for _ in 0..200 {
        let mut grad = vec![0.0; n + 1];
        let mut hess = Tridiagonal::zeros(n + 1);
        for i in 0..n {
            let (a, b) = (u[i], u[i + 1]);
            let d = b - a;
            let s = a + b;
            let num = nn + d * d;
            let hs = h * s;
            grad[i] += -2.0 * d / hs - num / (hs * s);
            grad[i + 1] += 2.0 * d / hs - num / (hs * s);
            let cross = 2.0 * num / (hs * s * s);
            hess.diag[i] += 2.0 / hs + 4.0 * d / (hs * s) + cross;
            hess.diag[i + 1] += 2.0 / hs - 4.0 * d / (hs * s) + cross;
            hess.upper[i] += -2.0 / hs + cross;
            hess.lower[i + 1] += -2.0 / hs + cross;
        }
        // interior unknowns only
        let mut sys = Tridiagonal::zeros(n - 1);
        sys.diag.copy_from_slice(&hess.diag[1..n]);
        sys.lower.copy_from_slice(&hess.lower[1..n]);
        sys.upper.copy_from_slice(&hess.upper[1..n]);
        let g = &grad[1..n];
        let step = sys.solve(g)?;
        let decrement: f64 = step.iter().zip(g).map(|(a, b)| a * b).sum();
        if decrement.abs() <= 1e-15 * f.abs().max(1e-300) {
            return Ok(f);
        }
        let mut lambda = 1.0;
        loop {
            let mut trial = u.clone();
            for k in 0..n - 1 {
                trial[k + 1] -= lambda * step[k];
            }
            if trial.iter().all(|v| *v > 0.0) {
                let ft = objective(&trial);
                if ft <= f - 1e-4 * lambda * decrement || lambda < 1e-8 {
                    u = trial;
                    f = ft;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Ok(f);
            }
        }
    }
    Ok(f)
}

/// Profiles `u[w(t), u±(t)]` along a pair of boundary time series.
#[derive(Debug, Clone)]
pub struct SpaceTimeProfile {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub profiles: Vec<MicroProfile>,
}

impl SpaceTimeProfile {
    /// `u(t_n, s)` at the given nodes for every stamp.
    pub fn sample(&self, nodes: &[f64]) -> Vec<Vec<f64>> {
        self.profiles
            .iter()
            .map(|p| {
                let last = nodes.len() - 1;
                nodes
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| if i == 0 { p.um } else if i == last { p.up } else { p.eval(s) })
                    .collect()
            })
            .collect()
    }
}

/// Second-order finite-difference derivative on a possibly nonuniform
/// grid; one-sided three-point formulas at the ends.
pub fn time_derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    if n == 2 {
        let d = (y[1] - y[0]) / (t[1] - t[0]);
        return vec![d, d];
    }
    let three = |i0: usize, x: f64| -> f64 {
        // derivative at x of the parabola through points i0..i0+2
        let (x0, x1, x2) = (t[i0], t[i0 + 1], t[i0 + 2]);
        let (y0, y1, y2) = (y[i0], y[i0 + 1], y[i0 + 2]);
        // the basis derivatives sum to zero; differences keep constants exact
        (y1 - y0) * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + (y2 - y0) * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    (0..n)
        .map(|i| match i {
            0 => three(0, t[0]),
            i if i == n - 1 => three(n - 3, t[n - 1]),
            i => three(i - 1, t[i]),
        })
        .collect()
}

/// Interpolates boundary series `u±(t)` in space with the minimisers of
/// `M`, taking `w = ½ u̇⁻`. Boundary values below `floor` are rejected.
pub fn interpolate_time(times: &[f64], um: &[f64], up: &[f64], kappa: f64, floor: f64) -> Result<SpaceTimeProfile> {
    if times.len() != um.len() || times.len() != up.len() || times.is_empty() {
        return Err(Error::InvalidInput("time series lengths differ".into()));
    }
    if let Some(v) = um.iter().chain(up).find(|v| !(**v >= floor)) {
        return Err(Error::InvalidInput(format!("boundary value {v} below floor {floor}")));
    }
    let w: Vec<f64> = time_derivative(times, um).into_iter().map(|d| 0.5 * d).collect();
    let profiles = w
        .iter()
        .zip(um.iter().zip(up))
        .map(|(&w, (&a, &b))| minimize_profile(w, a, b, kappa))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpaceTimeProfile { times: times.to_vec(), w, profiles })
}
