//! Implicit finite-volume solvers for the Fokker–Planck problem.
//!
//! Both coordinates share one discretisation: a node-centred grid with
//! half cells at the walls, a reference mass per cell, and a resistance per
//! face. One implicit Euler step solves `(M + Δt K) u' = M u` where `K` is
//! the weighted graph Laplacian with conductances `1/R_f`.
//!
//! * `s`-space: `M_i = γ̂_ε(cell_i)`, `R_f = h`.
//! * `ξ`-space: `M_i = γ_ε(cell_i)`, `R_f = h / (τ_ε g̃_f)` with `g̃` the
//!   harmonic mean of `g_ε` at the two adjacent nodes.
//!
//! The cell masses are the exact reference masses rather than point values
//! times `h`: `ĝ_ε` is concentrated in a layer at `±κ` much thinner than any
//! practical `h`, and point sampling would misplace most of the mass.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::measures::EpsilonContext;
use crate::tridiag::Tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Xi,
    S,
}

impl Space {
    pub fn coord_name(self) -> &'static str {
        match self {
            Space::Xi => "xi",
            Space::S => "s",
        }
    }
}

impl std::str::FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xi" => Ok(Space::Xi),
            "s" => Ok(Space::S),
            other => Err(Error::InvalidInput(format!("unknown space '{other}' (expected s or xi)"))),
        }
    }
}

/// Node positions, reference cell masses and face resistances.
#[derive(Debug, Clone)]
pub struct Grid {
    pub space: Space,
    pub nodes: Vec<f64>,
    pub cell_mass: Vec<f64>,
    /// `R_f` for the face between nodes `f` and `f + 1`.
    pub face_resistance: Vec<f64>,
}

impl Grid {
    /// Uniform grid on `S = [−κ, κ]`.
    pub fn s_space(ctx: &EpsilonContext, n: usize) -> Result<Self> {
        check_nodes(n)?;
        let kappa = ctx.kappa();
        let h = 2.0 * kappa / (n - 1) as f64;
        let nodes = uniform(-kappa, kappa, n);
        // masses of the right half, then mirrored: exact symmetry
        let cell_mass = symmetric_masses(n, |i| {
            let a = (nodes[i] - 0.5 * h).max(0.0);
            let b = (nodes[i] + 0.5 * h).min(kappa);
            ctx.hat_gamma_mass(a, b)
        })?;
        Ok(Self { space: Space::S, nodes, cell_mass, face_resistance: vec![h; n - 1] })
    }

    /// Uniform grid on `Ξ = [−1, 1]` with exponentially fitted faces.
    pub fn xi_space(ctx: &EpsilonContext, n: usize) -> Result<Self> {
        check_nodes(n)?;
        let h = 2.0 / (n - 1) as f64;
        let nodes = uniform(-1.0, 1.0, n);
        let cell_mass = symmetric_masses(n, |i| {
            let a = (nodes[i] - 0.5 * h).max(0.0);
            let b = (nodes[i] + 0.5 * h).min(1.0);
            ctx.gamma_mass(a, b)
        })?;
        let log_tau = ctx.log_tau();
        let face_resistance = nodes
            .windows(2)
            .map(|w| {
                let (la, lb) = (ctx.log_g(w[0]), ctx.log_g(w[1]));
                // harmonic mean 2ab/(a+b) in log form
                let hi = la.max(lb);
                let log_sum = hi + ((la - hi).exp() + (lb - hi).exp()).ln();
                let log_hm = std::f64::consts::LN_2 + la + lb - log_sum;
                (h.ln() - log_tau - log_hm).exp()
            })
            .collect();
        Ok(Self { space: Space::Xi, nodes, cell_mass, face_resistance })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node spacing.
    pub fn h(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    pub fn mass_of(&self, u: &[f64]) -> f64 {
        self.cell_mass.iter().zip(u).map(|(m, v)| m * v).sum()
    }

    fn system(&self, dt: f64) -> Tridiagonal {
        let n = self.len();
        let mut a = Tridiagonal::zeros(n);
        a.diag.copy_from_slice(&self.cell_mass);
        for (f, r) in self.face_resistance.iter().enumerate() {
            let c = dt / r;
            a.diag[f] += c;
            a.diag[f + 1] += c;
            a.upper[f] -= c;
            a.lower[f + 1] -= c;
        }
        a
    }
}

fn check_nodes(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("grid needs at least 3 nodes, got {n}")));
    }
    Ok(())
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    let mut x: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
    x[n - 1] = b;
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    x
}

/// Builds masses for the nodes with index ≥ n/2 using `half_mass` (which
/// receives a node index and must return the mass of that cell clipped to
/// the non-negative half), then mirrors them. The centre cell of an
/// odd grid straddles 0 and gets twice its right half.
fn symmetric_masses<F: Fn(usize) -> Result<f64>>(n: usize, half_mass: F) -> Result<Vec<f64>> {
    let mut m = vec![0.0; n];
    let first = n / 2;
    for i in first..n {
        let v = half_mass(i)?;
        m[i] = if n % 2 == 1 && i == first { 2.0 * v } else { v };
    }
    for i in 0..first {
        m[i] = m[n - 1 - i];
    }
    let total: f64 = m.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidInput("reference measure has no mass on the grid".into()));
    }
    Ok(m.into_iter().map(|v| v / total).collect())
}

/// A density relative to the grid's reference measure.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::NegativeDensity { node: i, value: v });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![c; n])
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<Grid>, f: F) -> Result<Self> {
        let values = grid.nodes.iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn from_initial(grid: Arc<Grid>, init: &InitialData) -> Result<Self> {
        let values = init.sample(&grid.nodes)?;
        Self::new(grid, values)
    }

    pub fn mass(&self) -> f64 {
        self.grid.mass_of(&self.values)
    }
}

/// Initial density descriptor, `step:a,b`, `const:c` or a `(x, u)` table.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `a` left of the origin, `b` right of it, the mean at the origin.
    Step(f64, f64),
    /// `a` to `b` through `½(a + b) − ½(a − b) tanh(x/w)`.
    SmoothStep(f64, f64, f64),
    Const(f64),
    /// Sample points in the grid coordinate, linearly interpolated.
    Table(Vec<f64>, Vec<f64>),
}

impl InitialData {
    /// Parses `step:a,b`, `tanh:a,b,w`, `const:c` or `file:<csv>`
    /// (columns `x,u`).
    pub fn parse(desc: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("cannot parse initial data '{desc}'"));
        let (kind, rest) = desc.split_once(':').ok_or_else(bad)?;
        match kind {
            "step" => {
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                let a: f64 = a.trim().parse().map_err(|_| bad())?;
                let b: f64 = b.trim().parse().map_err(|_| bad())?;
                Ok(Self::Step(a, b))
            }
            "tanh" => {
                let v: Vec<f64> = rest.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                match v[..] {
                    [a, b, w] if w > 0.0 => Ok(Self::SmoothStep(a, b, w)),
                    _ => Err(bad()),
                }
            }
            "const" => Ok(Self::Const(rest.trim().parse().map_err(|_| bad())?)),
            "file" => {
                let text = std::fs::read_to_string(rest)?;
                let mut x = Vec::new();
                let mut u = Vec::new();
                for line in text.lines() {
                    let mut cols = line.split(',');
                    let (Some(a), Some(b)) = (cols.next(), cols.next()) else { continue };
                    // header and blank lines fall through the parse
                    if let (Ok(a), Ok(b)) = (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                        x.push(a);
                        u.push(b);
                    }
                }
                if x.len() < 2 || x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidInput(format!("'{rest}' needs ≥ 2 rows with increasing x")));
                }
                Ok(Self::Table(x, u))
            }
            _ => Err(bad()),
        }
    }

    pub fn sample(&self, nodes: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Self::Step(a, b) => nodes
                .iter()
                .map(|&x| match x.partial_cmp(&0.0) {
                    Some(std::cmp::Ordering::Less) => *a,
                    Some(std::cmp::Ordering::Greater) => *b,
                    _ => 0.5 * (a + b),
                })
                .collect(),
            Self::SmoothStep(a, b, w) => nodes.iter().map(|&x| 0.5 * (a + b) - 0.5 * (a - b) * (x / w).tanh()).collect(),
            Self::Const(c) => vec![*c; nodes.len()],
            Self::Table(x, u) => nodes.iter().map(|&t| crate::interp::lerp_table(x, u, t)).collect(),
        })
    }
}

/// Time-stamped sequence of fields on one grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Arc<Grid>,
    pub eps: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Solver step (the spacing of `times` when every step is recorded).
    pub dt: f64,
}

impl Trajectory {
    pub fn space(&self) -> Space {
        self.grid.space
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mass(&self, n: usize) -> f64 {
        self.grid.mass_of(&self.values[n])
    }

    pub fn field(&self, n: usize) -> Field {
        Field { grid: self.grid.clone(), values: self.values[n].clone() }
    }

    /// The same stamps traversed backwards in time.
    pub fn reversed(&self) -> Self {
        let t_end = *self.times.last().unwrap();
        let mut times: Vec<f64> = self.times.iter().map(|t| t_end - t).collect();
        times.reverse();
        let mut values = self.values.clone();
        values.reverse();
        Self { times, values, ..self.clone() }
    }
}

/// Runs `n_steps` implicit Euler steps on `grid`, calling `observe(n, u)`
/// after every step and recording every `record_every`-th state (the final
/// state is always recorded).
pub fn integrate<F>(
    grid: Arc<Grid>,
    eps: f64,
    u0: &[f64],
    t_end: f64,
    n_steps: usize,
    record_every: usize,
    mut observe: F,
) -> Result<Trajectory>
where
    F: FnMut(usize, &[f64]),
{
    if n_steps == 0 || record_every == 0 {
        return Err(Error::InvalidInput("n_steps and record_every must be positive".into()));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("final time must be positive, got {t_end}")));
    }
    if u0.len() != grid.len() {
        return Err(Error::InvalidInput("initial field does not match grid".into()));
    }
    let dt = t_end / n_steps as f64;
    let system = grid.system(dt);
    let mut u = u0.to_vec();
    let mut times = vec![0.0];
    let mut values = vec![u.clone()];
    observe(0, &u);
    let mut rhs = vec![0.0; u.len()];
    for n in 1..=n_steps {
        // increment form (M + ΔtK) δ = −ΔtK u: data annihilated by K stays
        // bit-for-bit unchanged
        rhs.iter_mut().for_each(|r| *r = 0.0);
        for (f, r) in grid.face_resistance.iter().enumerate() {
            let q = dt * (u[f + 1] - u[f]) / r;
            rhs[f] += q;
            rhs[f + 1] -= q;
        }
        let delta = system.solve(&rhs)?;
        for (v, d) in u.iter_mut().zip(&delta) {
            *v += d;
        }
        observe(n, &u);
        if n % record_every == 0 || n == n_steps {
            times.push(n as f64 * dt);
            values.push(u.clone());
        }
    }
    Ok(Trajectory { grid, eps, times, values, dt })
}

/// Richardson extrapolation of implicit Euler runs whose step counts
/// double from one entry to the next, all recorded on the same stamps.
/// With `L` runs the result is accurate to order `L` in the time step.
pub fn richardson(runs: &[Trajectory]) -> Result<Trajectory> {
    let first = runs.first().ok_or_else(|| Error::InvalidInput("no runs to extrapolate".into()))?;
    if runs.iter().any(|r| r.times.len() != first.times.len() || r.grid.len() != first.grid.len()) {
        return Err(Error::InvalidInput("runs must share stamps and grid".into()));
    }
    // Neville table over halvings: T_{j,k} = T_{j,k−1} + (T_{j,k−1} − T_{j−1,k−1})/(2^k − 1)
    let mut table: Vec<Vec<Vec<f64>>> = runs.iter().map(|r| r.values.clone()).collect();
    for k in 1..runs.len() {
        let factor = 1.0 / ((1u64 << k) as f64 - 1.0);
        for j in (k..runs.len()).rev() {
            let (lo, hi) = table.split_at_mut(j);
            for (fine, coarse) in hi[0].iter_mut().zip(&lo[j - 1]) {
                for (f, c) in fine.iter_mut().zip(coarse) {
                    *f += (*f - c) * factor;
                }
            }
        }
    }
    let last = runs.len() - 1;
    Ok(Trajectory { values: table.swap_remove(last), ..first.clone() })
}

/// Solves `ĝ_ε ∂_t û = ∂_ss û` with no-flux walls, recording every step.
pub fn solve_s(ctx: &EpsilonContext, u0: &Field, t_end: f64, n_steps: usize) -> Result<Trajectory> {
    if u0.grid.space != Space::S {
        return Err(Error::InvalidInput("solve_s needs an s-space field".into()));
    }
    integrate(u0.grid.clone(), ctx.eps(), &u0.values, t_end, n_steps, 1, |_, _| {})
}

/// Solves `g_ε ∂_t u = τ_ε ∂_ξ(g_ε ∂_ξ u)` with no-flux walls.
pub fn solve_xi(ctx: &EpsilonContext, u0: &Field, t_end: f64, n_steps: usize) -> Result<Trajectory> {
    if u0.grid.space != Space::Xi {
        return Err(Error::InvalidInput("solve_xi needs a xi-space field".into()));
    }
    integrate(u0.grid.clone(), ctx.eps(), &u0.values, t_end, n_steps, 1, |_, _| {})
}

/// Resamples a `ξ`-space trajectory on an `s`-grid: `û(s) = u(ξ̂_ε(s))`.
pub fn pushforward(traj: &Trajectory, ctx: &EpsilonContext, s_grid: Arc<Grid>) -> Result<Trajectory> {
    if traj.space() != Space::Xi || s_grid.space != Space::S {
        return Err(Error::InvalidInput("pushforward maps a xi trajectory onto an s grid".into()));
    }
    let xi_at: Vec<f64> = s_grid.nodes.iter().map(|&s| ctx.xi_of_s(s)).collect();
    let values = traj
        .values
        .iter()
        .map(|u| {
            let p = Pchip::new(traj.grid.nodes.clone(), u.clone());
            xi_at.iter().map(|&x| p.eval(x).max(0.0)).collect()
        })
        .collect();
    Ok(Trajectory { grid: s_grid, eps: traj.eps, times: traj.times.clone(), values, dt: traj.dt })
}

/// `(t, u(t, left wall), u(t, right wall))` for every stamp.
pub fn traces(traj: &Trajectory) -> Vec<(f64, f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.values)
        .map(|(&t, u)| (t, u[0], *u.last().unwrap()))
        .collect()
}
