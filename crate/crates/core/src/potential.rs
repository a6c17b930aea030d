//! The double-well enthalpy `H` on `[-1, 1]` and the reaction constants it
//! induces.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A double-well potential with explicit evaluators for `H`, `H'` and `H''`.
///
/// The wells sit at `±1` with `H(±1) = 0`, the barrier at `0` with
/// `H(0) = 1`. Construct via [`PotentialSpec::default_well`],
/// [`PotentialSpec::polynomial`] or [`PotentialSpec::from_fns`], then run
/// [`validate`] before use.
#[derive(Clone)]
pub struct PotentialSpec {
    h: Scalar,
    dh: Scalar,
    d2h: Scalar,
    is_default: bool,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("is_default", &self.is_default)
            .field("H(0)", &self.h(0.0))
            .field("H''(0)", &self.d2h(0.0))
            .field("H''(1)", &self.d2h(1.0))
            .finish()
    }
}

impl PotentialSpec {
    /// `H(ξ) = (1 − ξ²)²`.
    pub fn default_well() -> Self {
        Self {
            h: Arc::new(|x: f64| {
                let a = 1.0 - x * x;
                a * a
            }),
            dh: Arc::new(|x: f64| -4.0 * x * (1.0 - x * x)),
            d2h: Arc::new(|x: f64| 12.0 * x * x - 4.0),
            is_default: true,
        }
    }

    /// Polynomial `H(ξ) = Σ c_i ξ^i` with derivatives taken term by term.
    pub fn polynomial(coefficients: &[f64]) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidInput("empty coefficient list".into()));
        }
        let c: Arc<[f64]> = coefficients.into();
        let d1: Arc<[f64]> = c.iter().enumerate().skip(1).map(|(i, v)| i as f64 * v).collect();
        let d2: Arc<[f64]> = d1.iter().enumerate().skip(1).map(|(i, v)| i as f64 * v).collect();
        Ok(Self {
            h: Arc::new(move |x| horner(&c, x)),
            dh: Arc::new(move |x| horner(&d1, x)),
            d2h: Arc::new(move |x| horner(&d2, x)),
            is_default: false,
        })
    }

    /// User-supplied evaluators.
    pub fn from_fns<H, D, D2>(h: H, dh: D, d2h: D2) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            h: Arc::new(h),
            dh: Arc::new(dh),
            d2h: Arc::new(d2h),
            is_default: false,
        }
    }

    pub fn h(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    pub fn dh(&self, x: f64) -> f64 {
        (self.dh)(x)
    }

    pub fn d2h(&self, x: f64) -> f64 {
        (self.d2h)(x)
    }

    pub fn is_default(&self) -> bool {
        self.is_default
    }
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::default_well()
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// `default_potential()`; the built-in `(1 − ξ²)²`.
pub fn default_potential() -> PotentialSpec {
    PotentialSpec::default_well()
}

/// How a run configuration selects its potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialChoice {
    /// Only `"default"` is recognised.
    Named(String),
    Coefficients { coefficients: Vec<f64> },
}

impl Default for PotentialChoice {
    fn default() -> Self {
        PotentialChoice::Named("default".into())
    }
}

impl PotentialChoice {
    pub fn build(&self) -> Result<PotentialSpec> {
        match self {
            PotentialChoice::Named(n) if n == "default" => Ok(PotentialSpec::default_well()),
            PotentialChoice::Named(n) => Err(Error::InvalidInput(format!("unknown potential '{n}'"))),
            PotentialChoice::Coefficients { coefficients } => {
                let spec = PotentialSpec::polynomial(coefficients)?;
                validate(&spec, 101)?.into_result()?;
                Ok(spec)
            }
        }
    }
}

/// One named check of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed violation (absolute or relative, per check).
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    /// Converts a failing report into an error naming the failed checks.
    pub fn into_result(self) -> Result<Self> {
        if self.all_passed() {
            Ok(self)
        } else {
            Err(Error::Potential(self.failed().join(", ")))
        }
    }
}

/// Checks evenness, endpoint values, curvature signs and consistency of the
/// derivative evaluators against central differences of `H` on
/// `n_samples` equispaced points of `[-1, 1]`.
pub fn validate(spec: &PotentialSpec, n_samples: usize) -> Result<ValidationReport> {
    if n_samples < 3 {
        return Err(Error::InvalidInput("n_samples must be at least 3".into()));
    }
    let xs: Vec<f64> = (0..n_samples)
        .map(|i| -1.0 + 2.0 * i as f64 / (n_samples - 1) as f64)
        .collect();
    let mut checks = Vec::new();

    let even = xs.iter().map(|&x| (spec.h(x) - spec.h(-x)).abs()).fold(0.0, f64::max);
    checks.push(Check { name: "even", passed: even <= 1e-12, worst: even });

    let odd = xs.iter().map(|&x| (spec.dh(x) + spec.dh(-x)).abs()).fold(0.0, f64::max);
    checks.push(Check { name: "derivative_odd", passed: odd <= 1e-10, worst: odd });

    let ends = (spec.h(0.0) - 1.0)
        .abs()
        .max(spec.h(1.0).abs())
        .max(spec.h(-1.0).abs());
    checks.push(Check { name: "endpoint_values", passed: ends <= 1e-12, worst: ends });

    let c0 = spec.d2h(0.0);
    let c1 = spec.d2h(1.0);
    checks.push(Check { name: "barrier_curvature", passed: c0 < 0.0, worst: c0 });
    checks.push(Check { name: "well_curvature", passed: c1 > 0.0, worst: c1 });

    // derivative consistency; one-sided differences at the walls
    let step = 1e-5;
    let mut worst_d1: f64 = 0.0;
    let mut worst_d2: f64 = 0.0;
    for &x in &xs {
        let (fd1, fd2) = if x - step < -1.0 {
            (
                (-3.0 * spec.h(x) + 4.0 * spec.h(x + step) - spec.h(x + 2.0 * step)) / (2.0 * step),
                (-3.0 * spec.dh(x) + 4.0 * spec.dh(x + step) - spec.dh(x + 2.0 * step)) / (2.0 * step),
            )
        } else if x + step > 1.0 {
            (
                (3.0 * spec.h(x) - 4.0 * spec.h(x - step) + spec.h(x - 2.0 * step)) / (2.0 * step),
                (3.0 * spec.dh(x) - 4.0 * spec.dh(x - step) + spec.dh(x - 2.0 * step)) / (2.0 * step),
            )
        } else {
            (
                (spec.h(x + step) - spec.h(x - step)) / (2.0 * step),
                (spec.dh(x + step) - spec.dh(x - step)) / (2.0 * step),
            )
        };
        worst_d1 = worst_d1.max(rel_gap(spec.dh(x), fd1));
        worst_d2 = worst_d2.max(rel_gap(spec.d2h(x), fd2));
    }
    checks.push(Check { name: "first_derivative", passed: worst_d1 <= 1e-6, worst: worst_d1 });
    checks.push(Check { name: "second_derivative", passed: worst_d2 <= 1e-6, worst: worst_d2 });

    Ok(ValidationReport { checks })
}

fn rel_gap(exact: f64, approx: f64) -> f64 {
    (exact - approx).abs() / exact.abs().max(1.0)
}

/// Kramers rate `k` and rescaled half-length `κ = 1/k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReactionConstants {
    pub k: f64,
    pub kappa: f64,
}

/// `k = √(|H''(0)| H''(1)) / π`, `κ = 1/k`.
pub fn reaction_constants(spec: &PotentialSpec) -> Result<ReactionConstants> {
    let c0 = spec.d2h(0.0);
    let c1 = spec.d2h(1.0);
    if c0 >= 0.0 {
        return Err(Error::Potential(format!("H''(0) = {c0} is not negative")));
    }
    if c1 <= 0.0 {
        return Err(Error::Potential(format!("H''(1) = {c1} is not positive")));
    }
    let k = (c0.abs() * c1).sqrt() / std::f64::consts::PI;
    Ok(ReactionConstants { k, kappa: 1.0 / k })
}
