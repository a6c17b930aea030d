//! Stationary measure, time scale and the rescaling `ξ ↦ s` for one `ε`.
//!
//! Every density is carried as a logarithm: `g_ε` ranges over roughly
//! `e^{-1/ε}`, so exponentiation happens only at the last step.
//!
//! * `log g_ε(ξ) = −H(ξ)/ε − log Z_ε`
//! * `τ_ε = (1/2κ) ∫ dξ / g_ε`
//! * `ŝ_ε(ξ) = ∫_0^ξ dη / (τ_ε g_ε(η))`, mapping `[-1, 1]` onto `[-κ, κ]`
//! * `ĝ_ε(s) = τ_ε g_ε(ξ̂_ε(s))²`

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::potential::{reaction_constants, PotentialSpec, ReactionConstants};
use crate::quadrature::{integrate_graded, GaussLegendre, GradedOptions};

/// Lower end of the supported `ε` range.
pub const EPS_MIN: f64 = 0.02;
/// Upper end of the supported `ε` range.
pub const EPS_MAX: f64 = 1.0;
/// Default floor for exponentiated rescaled densities.
pub const DENSITY_FLOOR: f64 = 1e-300;

fn check_eps_range(eps: f64) -> Result<()> {
    if !(EPS_MIN..=EPS_MAX).contains(&eps) {
        return Err(Error::EpsilonRange { eps, min: EPS_MIN, max: EPS_MAX });
    }
    Ok(())
}

fn sampled_extrema(spec: &PotentialSpec) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=2000 {
        let h = spec.h(-1.0 + i as f64 * 1e-3);
        lo = lo.min(h);
        hi = hi.max(h);
    }
    (lo, hi)
}

fn quad_opts(rel_tol: f64) -> GradedOptions {
    GradedOptions { rel_tol, levels: 12, max_doublings: 14 }
}

/// `log Z_ε` with `Z_ε = ∫_{-1}^{1} e^{−H/ε} dξ`. Any `ε > 0` is accepted.
pub fn log_partition_z(spec: &PotentialSpec, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let (h_min, _) = sampled_extrema(spec);
    let integral = integrate_graded(
        |x| (-(spec.h(x) - h_min) / eps).exp(),
        -1.0,
        1.0,
        &[-1.0, 1.0],
        quad_opts(1e-13),
    )?;
    Ok(-h_min / eps + integral.ln())
}

/// `Z_ε`, the normalisation of the stationary measure `γ_ε`.
pub fn partition_z(spec: &PotentialSpec, eps: f64) -> Result<f64> {
    log_partition_z(spec, eps).map(f64::exp)
}

/// `log τ_ε` given `log Z_ε` and `κ`.
pub fn log_time_scale_tau(spec: &PotentialSpec, eps: f64, log_z: f64, kappa: f64) -> Result<f64> {
    let (_, h_max) = sampled_extrema(spec);
    let integral = integrate_graded(
        |x| ((spec.h(x) - h_max) / eps).exp(),
        -1.0,
        1.0,
        &[0.0],
        quad_opts(1e-13),
    )?;
    Ok(log_z - (2.0 * kappa).ln() + h_max / eps + integral.ln())
}

/// `τ_ε = (1/2κ) ∫ dξ / g_ε(ξ)`.
pub fn time_scale_tau(spec: &PotentialSpec, eps: f64) -> Result<f64> {
    check_eps_range(eps)?;
    let rc = reaction_constants(spec)?;
    let log_z = log_partition_z(spec, eps)?;
    let log_tau = log_time_scale_tau(spec, eps, log_z, rc.kappa)?;
    if log_tau > 709.0 {
        return Err(Error::Overflow(log_tau));
    }
    Ok(log_tau.exp())
}

/// Node table of the monotone map `ŝ_ε` on `[0, 1]` (extended to `[-1, 0]`
/// by oddness) and its inverse.
#[derive(Debug, Clone)]
pub struct TransformTable {
    xi: Vec<f64>,
    s: Vec<f64>,
    kappa: f64,
    eps: f64,
    /// `log Z_ε − log τ_ε`: `log dŝ/dξ = H/ε + shift`.
    shift: f64,
    spec: Arc<PotentialSpec>,
    rule: GaussLegendre,
    guess: Pchip,
}

impl TransformTable {
    /// Builds the table with `n_nodes` nodes across `[-1, 1]`
    /// (`n_nodes / 2` panels on each half, graded toward `ξ = 0`).
    pub fn build(spec: Arc<PotentialSpec>, eps: f64, log_z: f64, log_tau: f64, kappa: f64, n_nodes: usize) -> Result<Self> {
        if n_nodes < 64 {
            return Err(Error::InvalidInput(format!("transform needs at least 64 nodes, got {n_nodes}")));
        }
        let panels = n_nodes / 2;
        let xi: Vec<f64> = (0..=panels)
            .map(|j| {
                let t = j as f64 / panels as f64;
                0.5 * t * (1.0 + t)
            })
            .collect();
        let rule = GaussLegendre::new(20);
        let raw_shift = log_z - log_tau;
        let mut inc = vec![0.0; xi.len()];
        for j in 1..xi.len() {
            inc[j] = panel_integral(&rule, &spec, eps, raw_shift, xi[j - 1], xi[j]);
            // increments near the wells fall below the resolution of s, so
            // positivity of each increment is the meaningful check
            if !(inc[j] > 0.0) || !inc[j].is_finite() {
                return Err(Error::Monotonicity(j));
            }
        }
        // renormalise so that ŝ(1) = κ holds exactly; the correction is at
        // the level of the quadrature error in τ
        let total: f64 = inc.iter().sum();
        let shift = raw_shift + (kappa / total).ln();
        let mut s = vec![0.0; xi.len()];
        for j in 1..xi.len() {
            s[j] = s[j - 1] + inc[j] * kappa / total;
        }
        *s.last_mut().unwrap() = kappa;
        // slopes dξ/ds = τ g(ξ) = exp(-(H/ε + shift))
        let slopes: Vec<f64> = xi.iter().map(|&x| (-(spec.h(x) / eps + shift)).exp()).collect();
        let guess = Pchip::with_slopes(s.clone(), xi.clone(), slopes);
        Ok(Self { xi, s, kappa, eps, shift, spec, rule, guess })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `(ξ_j, s_j)` for `ξ_j ≥ 0`.
    pub fn half_nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xi.iter().copied().zip(self.s.iter().copied())
    }

    /// Full table over `[-1, 1]`, increasing in `ξ`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self.half_nodes().skip(1).map(|(x, s)| (-x, -s)).collect();
        out.reverse();
        out.extend(self.half_nodes());
        out
    }

    /// `log dŝ/dξ = −log(τ_ε g_ε(ξ))`.
    pub fn log_ds_dxi(&self, xi: f64) -> f64 {
        self.spec.h(xi) / self.eps + self.shift
    }

    /// `ŝ_ε(ξ)` by exact local quadrature from the nearest table node.
    pub fn s_of_xi(&self, xi: f64) -> f64 {
        let a = xi.abs().min(1.0);
        let j = locate(&self.xi, a);
        let v = self.s[j] + panel_integral(&self.rule, &self.spec, self.eps, self.shift, self.xi[j], a);
        v.copysign(xi)
    }

    /// `ξ̂_ε(s)`: cubic Hermite guess polished by safeguarded Newton.
    pub fn xi_of_s(&self, s: f64) -> f64 {
        let a = s.abs();
        let last = *self.s.last().unwrap();
        if a >= last {
            return 1.0f64.copysign(s);
        }
        let j = locate(&self.s, a);
        let (mut lo, mut hi) = (self.xi[j], self.xi[j + 1]);
        let mut x = self.guess.eval(a).clamp(lo, hi);
        for _ in 0..60 {
            let f = self.s[j] + panel_integral(&self.rule, &self.spec, self.eps, self.shift, self.xi[j], x) - a;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = f * (-self.log_ds_dxi(x)).exp();
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-16 * x.abs().max(1e-300) || hi - lo <= 1e-16 {
                x = next;
                break;
            }
            x = next;
        }
        x.copysign(s)
    }
}

fn locate(table: &[f64], v: f64) -> usize {
    let n = table.len();
    match table.binary_search_by(|t| t.partial_cmp(&v).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(n - 2),
    }
}

/// `∫_a^b exp(H/ε + shift) dξ` on a short panel (four GL-20 subpanels).
fn panel_integral(rule: &GaussLegendre, spec: &PotentialSpec, eps: f64, shift: f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let h = (b - a) / 4.0;
    (0..4)
        .map(|k| {
            let lo = a + k as f64 * h;
            rule.integrate(lo, lo + h, |x| (spec.h(x) / eps + shift).exp())
        })
        .sum()
}

/// Options for [`EpsilonContext::build`].
#[derive(Debug, Clone, Copy)]
pub struct ContextOptions {
    pub table_nodes: usize,
    pub density_floor: f64,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self { table_nodes: 512, density_floor: DENSITY_FLOOR }
    }
}

/// Everything tied to one value of `ε`. Immutable once built.
#[derive(Debug, Clone)]
pub struct EpsilonContext {
    spec: Arc<PotentialSpec>,
    eps: f64,
    log_z: f64,
    log_tau: f64,
    constants: ReactionConstants,
    table: TransformTable,
    floor: f64,
}

/// Scalar summary printed by the `constants` command.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstantsSummary {
    #[serde(rename = "Z")]
    pub z: f64,
    pub tau: f64,
    pub k: f64,
    pub kappa: f64,
    pub watson_ratio: f64,
}

impl EpsilonContext {
    pub fn build(spec: Arc<PotentialSpec>, eps: f64, opts: ContextOptions) -> Result<Self> {
        check_eps_range(eps)?;
        let constants = reaction_constants(&spec)?;
        let log_z = log_partition_z(&spec, eps)?;
        let log_tau = log_time_scale_tau(&spec, eps, log_z, constants.kappa)?;
        let table = TransformTable::build(spec.clone(), eps, log_z, log_tau, constants.kappa, opts.table_nodes)?;
        Ok(Self { spec, eps, log_z, log_tau, constants, table, floor: opts.density_floor })
    }

    /// Context for the default potential with default options.
    pub fn default_for(eps: f64) -> Result<Self> {
        Self::build(Arc::new(PotentialSpec::default_well()), eps, ContextOptions::default())
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn potential_arc(&self) -> Arc<PotentialSpec> {
        self.spec.clone()
    }

    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn log_tau(&self) -> f64 {
        self.log_tau
    }

    pub fn k(&self) -> f64 {
        self.constants.k
    }

    pub fn kappa(&self) -> f64 {
        self.constants.kappa
    }

    pub fn constants(&self) -> ReactionConstants {
        self.constants
    }

    pub fn table(&self) -> &TransformTable {
        &self.table
    }

    /// `τ_ε / (ε e^{1/ε})`, which tends to 1 as `ε ↓ 0`.
    pub fn watson_ratio(&self) -> f64 {
        (self.log_tau - self.eps.ln() - 1.0 / self.eps).exp()
    }

    pub fn summary(&self) -> ConstantsSummary {
        ConstantsSummary {
            z: self.z(),
            tau: self.tau(),
            k: self.k(),
            kappa: self.kappa(),
            watson_ratio: self.watson_ratio(),
        }
    }

    pub fn log_g(&self, xi: f64) -> f64 {
        -self.spec.h(xi) / self.eps - self.log_z
    }

    pub fn g(&self, xi: f64) -> f64 {
        self.log_g(xi).exp()
    }

    pub fn s_of_xi(&self, xi: f64) -> f64 {
        self.table.s_of_xi(xi)
    }

    pub fn xi_of_s(&self, s: f64) -> f64 {
        self.table.xi_of_s(s)
    }

    /// `log ĝ_ε(s) = log τ_ε + 2 log g_ε(ξ̂_ε(s))`.
    pub fn log_hat_density(&self, s: f64) -> f64 {
        self.log_tau + 2.0 * self.log_g(self.xi_of_s(s))
    }

    /// `ĝ_ε(s)`, flushed to the density floor on underflow.
    pub fn hat_density(&self, s: f64) -> f64 {
        self.log_hat_density(s).exp().max(self.floor)
    }

    /// `γ_ε([a, b])` for `-1 ≤ a ≤ b ≤ 1`.
    pub fn gamma_mass(&self, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        // the integrand is monotone away from ±1 and 0, so grading toward
        // the ends and the wells covers every peak
        let mut peaks = vec![a, b];
        for p in [-1.0, 0.0, 1.0] {
            if p > a && p < b {
                peaks.push(p);
            }
        }
        let log_z = self.log_z;
        let eps = self.eps;
        let spec = &self.spec;
        integrate_graded(
            |x| (-spec.h(x) / eps - log_z).exp(),
            a,
            b,
            &peaks,
            GradedOptions { rel_tol: 1e-13, levels: 8, max_doublings: 12 },
        )
    }

    /// `γ̂_ε([a, b])` for an `s`-interval, via the inverse transform.
    pub fn hat_gamma_mass(&self, a: f64, b: f64) -> Result<f64> {
        self.gamma_mass(self.xi_of_s(a), self.xi_of_s(b))
    }

    /// `(s_i, ĝ_ε(s_i))` on `n` uniform nodes of `[-κ, κ]`.
    pub fn hat_density_grid(&self, n: usize) -> Vec<(f64, f64)> {
        let kappa = self.kappa();
        (0..n)
            .map(|i| {
                let s = -kappa + 2.0 * kappa * i as f64 / (n - 1) as f64;
                (s, self.hat_density(s))
            })
            .collect()
    }
}
