//! Independent Brownian particles in the landscape `H/ε`, run on the same
//! time scale as the Fokker–Planck solvers:
//!
//! ```text
//! dξ = −(τ_ε/ε) H′(ξ) dt + √(2τ_ε) dW,   reflected at ξ = ±1.
//! ```
//!
//! The law of one particle then solves `∂_t ρ = τ_ε ∂_ξ(∂_ξ ρ + ρ H′/ε)`,
//! which is the `ξ`-space equation for `ρ = u γ_ε`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_solver::{Field, Space};
use crate::measures::EpsilonContext;

/// Time stepping for the SDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Plain Euler–Maruyama.
    EulerMaruyama,
    /// Euler–Maruyama on the drift linearised at the current point; exact
    /// for quadratic wells, so the in-well spread is not inflated by `dt`.
    LocalLinear,
    /// Predictor–corrector (stochastic Heun), weak order 2 for additive
    /// noise. The predictor may leave `[−1, 1]`; there the drift of the
    /// mirror-extended landscape is used, so folding afterwards is exact.
    Heun,
}

/// Where particles start.
#[derive(Debug, Clone)]
pub enum ParticleInit {
    Point(f64),
    /// Law `u₀ γ_ε` for a `ξ`-space initial density `u₀`.
    Density(Field),
}

#[derive(Debug, Clone)]
pub struct ParticleConfig {
    pub n: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub bins: usize,
    /// Snapshot times; the final time is always included.
    pub snapshots: Vec<f64>,
    pub scheme: Scheme,
    /// `false` drops the Brownian term (deterministic gradient descent).
    pub noise: bool,
}

impl ParticleConfig {
    pub fn new(n: usize, t_end: f64, dt: f64, seed: u64) -> Self {
        Self { n, t_end, dt, seed, bins: 400, snapshots: vec![], scheme: Scheme::Heun, noise: true }
    }
}

/// Bin counts on a uniform partition of `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub t: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        2.0 / self.counts.len() as f64
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.counts.len()).map(|i| -1.0 + (i as f64 + 0.5) * w).collect()
    }

    /// Probability CDF, linear inside each bin.
    pub fn cdf(&self) -> PiecewiseCdf {
        let n = self.total().max(1) as f64;
        let w = self.bin_width();
        let mut x = vec![-1.0];
        let mut f = vec![0.0];
        let mut acc = 0u64;
        for (i, c) in self.counts.iter().enumerate() {
            acc += c;
            x.push(if i + 1 == self.counts.len() { 1.0 } else { -1.0 + (i + 1) as f64 * w });
            f.push(acc as f64 / n);
        }
        PiecewiseCdf { x, f }
    }
}

#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub snapshots: Vec<Histogram>,
    pub positions: Vec<f64>,
    pub steps: usize,
    pub dt: f64,
}

/// Folds a point back into `[−1, 1]` (iterated mirror reflection).
#[inline]
pub fn reflect(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        x
    } else {
        reflect_slow(x)
    }
}

#[cold]
fn reflect_slow(mut x: f64) -> f64 {
    for _ in 0..64 {
        if x > 1.0 {
            x = 2.0 - x;
        } else if x < -1.0 {
            x = -2.0 - x;
        } else {
            return x;
        }
    }
    // far outside: reduce modulo the period 4 of the folding map
    let y = (x + 1.0).rem_euclid(4.0);
    if y <= 2.0 {
        y - 1.0
    } else {
        3.0 - y
    }
}

/// Inverse-CDF sampler for `u₀ γ_ε` built on a fine table.
struct DensitySampler {
    x: Vec<f64>,
    cdf: Vec<f64>,
}

impl DensitySampler {
    fn new(ctx: &EpsilonContext, field: &Field) -> Result<Self> {
        if field.grid.space != Space::Xi {
            return Err(Error::InvalidInput("particle initial density must live in xi-space".into()));
        }
        let n = 20_000;
        let x: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
        let p = crate::interp::Pchip::new(field.grid.nodes.clone(), field.values.clone());
        let dens: Vec<f64> = x.iter().map(|&v| p.eval(v).max(0.0) * ctx.g(v)).collect();
        let mut cdf = vec![0.0; n + 1];
        for i in 0..n {
            cdf[i + 1] = cdf[i] + 0.5 * (dens[i] + dens[i + 1]) * (x[i + 1] - x[i]);
        }
        let total = cdf[n];
        if !(total > 0.0) {
            return Err(Error::InvalidInput("initial density has no mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { x, cdf })
    }

    fn sample(&self, v: f64) -> f64 {
        let i = match self.cdf.binary_search_by(|c| c.partial_cmp(&v).unwrap()) {
            Ok(i) => return self.x[i],
            Err(i) => i.clamp(1, self.x.len() - 1) - 1,
        };
        let span = self.cdf[i + 1] - self.cdf[i];
        let frac = if span > 0.0 { (v - self.cdf[i]) / span } else { 0.5 };
        self.x[i] + frac * (self.x[i + 1] - self.x[i])
    }
}

/// Runs the ensemble. Each particle draws from its own ChaCha8 stream
/// (`seed`, stream = particle index) so the result does not depend on how
/// particles are split across threads.
pub fn simulate(ctx: &EpsilonContext, init: &ParticleInit, cfg: &ParticleConfig) -> Result<ParticleRun> {
    if cfg.n == 0 || cfg.bins == 0 {
        return Err(Error::InvalidInput("need at least one particle and one bin".into()));
    }
    if !(cfg.t_end > 0.0) || !(cfg.dt > 0.0) {
        return Err(Error::InvalidInput("T and dt must be positive".into()));
    }
    let spec = ctx.potential_arc();
    let tau = ctx.tau();
    let eps = ctx.eps();
    let drift_scale = tau / eps;
    let max_dh = (0..=2000).map(|i| spec.dh(-1.0 + i as f64 * 1e-3).abs()).fold(0.0, f64::max);
    let guard = drift_scale * max_dh * cfg.dt;
    if guard > 0.5 {
        return Err(Error::StepSize(guard));
    }
    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let dt = cfg.t_end / steps as f64;
    let mut stamps: Vec<usize> = cfg
        .snapshots
        .iter()
        .filter(|t| **t >= 0.0 && **t <= cfg.t_end)
        .map(|t| (t / dt).round() as usize)
        .collect();
    stamps.push(steps);
    stamps.sort_unstable();
    stamps.dedup();

    let sampler = match init {
        ParticleInit::Density(f) => Some(DensitySampler::new(ctx, f)?),
        ParticleInit::Point(x) => {
            if !(-1.0..=1.0).contains(x) {
                return Err(Error::InvalidInput(format!("start point {x} outside [-1, 1]")));
            }
            None
        }
    };
    let sigma = if cfg.noise { (2.0 * tau * dt).sqrt() } else { 0.0 };
    let bins = cfg.bins;

    let shared = Shared { sampler: sampler.as_ref(), init, stamps: &stamps, steps, bins, seed: cfg.seed, noise: cfg.noise };
    let results = if spec.is_default() {
        // monomorphic fast path for (1 − ξ²)²
        let stepper = Stepper {
            dh: |x: f64| -4.0 * x * (1.0 - x * x),
            d2h: |x: f64| 12.0 * x * x - 4.0,
            drift_scale,
            dt,
            sigma,
            scheme: cfg.scheme,
        };
        run_all(&stepper, &shared, cfg.n)
    } else {
        let stepper = Stepper {
            dh: |x: f64| spec.dh(x),
            d2h: |x: f64| spec.d2h(x),
            drift_scale,
            dt,
            sigma,
            scheme: cfg.scheme,
        };
        run_all(&stepper, &shared, cfg.n)
    };
    let mut snapshots: Vec<Histogram> =
        stamps.iter().map(|&s| Histogram { t: s as f64 * dt, counts: vec![0; bins] }).collect();
    for (hits, _) in &results {
        for (h, &b) in snapshots.iter_mut().zip(hits) {
            h.counts[b] += 1;
        }
    }
    let positions = results.into_iter().map(|(_, x)| x).collect();
    Ok(ParticleRun { snapshots, positions, steps, dt })
}

struct Stepper<D1, D2> {
    dh: D1,
    d2h: D2,
    drift_scale: f64,
    dt: f64,
    sigma: f64,
    scheme: Scheme,
}

impl<D1: Fn(f64) -> f64, D2: Fn(f64) -> f64> Stepper<D1, D2> {
    #[inline]
    fn step(&self, x: f64, z: f64) -> f64 {
        let (dt, sigma, k) = (self.dt, self.sigma, self.drift_scale);
        let f = -k * (self.dh)(x);
        let next = match self.scheme {
            Scheme::EulerMaruyama => x + f * dt + sigma * z,
            Scheme::LocalLinear => {
                let jdt = -k * (self.d2h)(x) * dt;
                // φ₁(y) = (e^y − 1)/y and the matching noise variance factor
                let phi1 = if jdt.abs() < 1e-8 { 1.0 + 0.5 * jdt } else { jdt.exp_m1() / jdt };
                let var = if jdt.abs() < 1e-8 { 1.0 + jdt } else { (2.0 * jdt).exp_m1() / (2.0 * jdt) };
                x + phi1 * f * dt + sigma * var.sqrt() * z
            }
            Scheme::Heun => {
                let noise = sigma * z;
                let pred = x + f * dt + noise;
                // mirror-extended drift outside the interval is −f(fold(x))
                let f_pred = if pred.abs() > 1.0 { k * (self.dh)(reflect(pred)) } else { -k * (self.dh)(pred) };
                x + 0.5 * (f + f_pred) * dt + noise
            }
        };
        reflect(next)
    }
}

struct Shared<'a> {
    sampler: Option<&'a DensitySampler>,
    init: &'a ParticleInit,
    stamps: &'a [usize],
    steps: usize,
    bins: usize,
    seed: u64,
    noise: bool,
}

fn run_all<D1, D2>(stepper: &Stepper<D1, D2>, sh: &Shared<'_>, n: usize) -> Vec<(Vec<usize>, f64)>
where
    D1: Fn(f64) -> f64 + Sync,
    D2: Fn(f64) -> f64 + Sync,
{
    let bin_of = |x: f64| (((x + 1.0) / 2.0 * sh.bins as f64) as usize).min(sh.bins - 1);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sh.seed);
            rng.set_stream(i as u64);
            let mut x = match (sh.sampler, sh.init) {
                (Some(s), _) => s.sample(rng.random::<f64>()),
                (None, ParticleInit::Point(p)) => *p,
                (None, ParticleInit::Density(_)) => unreachable!("sampler is built for densities"),
            };
            let mut hits = Vec::with_capacity(sh.stamps.len());
            let mut next_stamp = 0;
            if sh.stamps[0] == 0 {
                hits.push(bin_of(x));
                next_stamp = 1;
            }
            for n in 1..=sh.steps {
                let z: f64 = if sh.noise { rng.sample(StandardNormal) } else { 0.0 };
                x = stepper.step(x, z);
                if next_stamp < sh.stamps.len() && sh.stamps[next_stamp] == n {
                    hits.push(bin_of(x));
                    next_stamp += 1;
                }
            }
            (hits, x)
        })
        .collect()
}

/// Piecewise-linear cumulative distribution on `[x_0, x_N]`; repeated knots
/// encode jumps (point masses).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCdf {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
}

impl PiecewiseCdf {
    /// CDF of a field's mass, uniform within each cell, normalised to 1.
    pub fn from_field(field: &Field) -> Self {
        let g = &field.grid;
        let n = g.len();
        let mass = field.mass();
        let mut x = vec![g.nodes[0]];
        let mut f = vec![0.0];
        let mut acc = 0.0;
        for i in 0..n {
            acc += g.cell_mass[i] * field.values[i];
            x.push(if i + 1 == n { g.nodes[n - 1] } else { 0.5 * (g.nodes[i] + g.nodes[i + 1]) });
            f.push(acc / mass);
        }
        Self { x, f }
    }

    pub fn total(&self) -> f64 {
        *self.f.last().unwrap()
    }

    /// Value just right of `t` (`side = true`) or just left of it.
    fn eval(&self, t: f64, right: bool) -> f64 {
        let n = self.x.len();
        if t < self.x[0] || (t == self.x[0] && !right) {
            return 0.0;
        }
        if t > self.x[n - 1] || (t == self.x[n - 1] && right) {
            return self.f[n - 1];
        }
        // last knot ≤ t for right limits, first knot ≥ t for left limits
        let i = if right {
            self.x.partition_point(|v| *v <= t) - 1
        } else {
            self.x.partition_point(|v| *v < t)
        };
        if self.x[i] == t {
            return self.f[i];
        }
        let (lo, hi) = if right { (i, i + 1) } else { (i - 1, i) };
        let s = (t - self.x[lo]) / (self.x[hi] - self.x[lo]);
        self.f[lo] + s * (self.f[hi] - self.f[lo])
    }
}

/// `W₁ = ∫ |F_a − F_b| dx` on the merged knot set.
pub fn w1_distance(a: &PiecewiseCdf, b: &PiecewiseCdf) -> Result<f64> {
    if (a.total() - b.total()).abs() > 1e-6 * a.total().abs().max(1.0) {
        return Err(Error::InvalidInput(format!("mass mismatch: {} vs {}", a.total(), b.total())));
    }
    let mut knots: Vec<f64> = a.x.iter().chain(&b.x).copied().collect();
    knots.sort_by(|p, q| p.partial_cmp(q).unwrap());
    knots.dedup();
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (p, q) = (w[0], w[1]);
        let d0 = a.eval(p, true) - b.eval(p, true);
        let d1 = a.eval(q, false) - b.eval(q, false);
        let len = q - p;
        total += if d0 * d1 >= 0.0 {
            0.5 * (d0.abs() + d1.abs()) * len
        } else {
            0.5 * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs()) * len
        };
    }
    Ok(total)
}

/// `W₁` between a histogram and the normalised mass of a `ξ`-space field.
pub fn empirical_distance(hist: &Histogram, field: &Field) -> Result<f64> {
    w1_distance(&hist.cdf(), &PiecewiseCdf::from_field(field))
}
