//! Command-line front end. Exit status: 0 on success, 1 on invalid input
//! or configuration, 2 on numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::{converge_sweep, particle_study, RunConfig, OUT_ENV};
use crate::fp_solver::{integrate, Field, Grid, InitialData, Space, Trajectory};
use crate::functionals::{action_with, entropy, MASS_TOL};
use crate::limit_system::{action0, entropy0, solve_limit};
use crate::measures::{ContextOptions, EpsilonContext};
use crate::micro_m::{m_bounds, m_value, minimize_profile};
use crate::particles::{ParticleConfig, Scheme};
use crate::potential::reaction_constants;
use crate::recovery::{reference_curve, recovery_sweep};

#[derive(Debug, Parser)]
#[command(name = "kramers", version, about = "Diffusion-to-reaction limit of a double-well Fokker-Planck equation")]
struct Cli {
    /// JSON run configuration (see docs/config.md).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV/JSON artifacts; without it tables go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Z, tau, k, kappa and the Watson ratio as JSON.
    Constants {
        #[arg(long)]
        eps: f64,
    },
    /// Table of (xi, s, ghat).
    Transform {
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 201)]
        nodes: usize,
    },
    /// Implicit Euler solve in xi or s.
    Solve(SolveArgs),
    /// Action breakdown of a trajectory in long CSV form.
    Action {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value = "s")]
        space: Space,
    },
    /// The cell problem M(w; u-, u+).
    Micro {
        #[arg(long, allow_hyphen_values = true)]
        w: f64,
        #[arg(long)]
        um: f64,
        #[arg(long)]
        up: f64,
        /// Defaults to 1/k of the configured potential.
        #[arg(long)]
        kappa: Option<f64>,
        /// Also emit the minimising profile as CSV `s,u`.
        #[arg(long)]
        profile: bool,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Closed-form solution of the two-state limit equation.
    Limit {
        /// Initial `u-,u+`.
        #[arg(long, value_parser = parse_pair)]
        u0: (f64, f64),
        #[arg(long = "T")]
        t: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Append the limit action breakdown.
        #[arg(long)]
        action: bool,
    },
    /// Recovery sequence for a limit curve.
    Recover(RecoverArgs),
    /// Brownian particles against the Fokker-Planck solution.
    Particles(ParticleArgs),
    /// Convergence sweep over eps; writes report.csv.
    Converge,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value = "s")]
    space: Space,
    #[arg(long, default_value_t = 201)]
    grid: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long = "T")]
    t: f64,
    #[arg(long, default_value = "step:2,0")]
    init: String,
    /// Keep every n-th step.
    #[arg(long, default_value_t = 1)]
    record: usize,
    /// Per-stamp traces, mass and entropy as JSON instead of the long CSV.
    #[arg(long)]
    summary: bool,
}

#[derive(Debug, Args)]
struct RecoverArgs {
    /// CSV with columns `t,um,up`; defaults to the limit solution from (1.6, 0.4).
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Use `eta` and `width` as given instead of the ε-dependent schedule.
    #[arg(long)]
    fixed: bool,
}

#[derive(Debug, Args)]
struct ParticleArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long = "T")]
    t: f64,
    #[arg(long, default_value_t = 2.5e-4)]
    dt: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    bins: usize,
    /// Evenly spaced snapshots in (0, T].
    #[arg(long, default_value_t = 4)]
    snapshots: usize,
    #[arg(long, default_value = "heun")]
    scheme: String,
    /// Initial density in xi.
    #[arg(long, default_value = "step:2,0")]
    init: String,
    #[arg(long, default_value_t = 801)]
    fp_nodes: usize,
    #[arg(long, default_value_t = 4000)]
    fp_steps: usize,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

struct Session {
    cfg: RunConfig,
    /// Set by `--out` or the environment; `None` means stdout.
    out: Option<PathBuf>,
}

impl Session {
    fn new(cli: &Cli) -> Result<Self> {
        let cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let env = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        Ok(Self { cfg, out: cli.out.clone().or(env) })
    }

    fn context(&self, eps: f64) -> Result<EpsilonContext> {
        EpsilonContext::build(self.cfg.potential()?, eps, ContextOptions::default())
    }

    /// Writes `text` to `<out>/<name>` or, without a directory, to stdout.
    fn emit(&self, name: &str, text: &str) -> Result<()> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let p = dir.join(name);
                std::fs::write(&p, text)?;
                println!("{}", p.display());
            }
            None => {
                let mut so = std::io::stdout().lock();
                so.write_all(text.as_bytes())?;
            }
        }
        Ok(())
    }
}

fn to_json(v: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    let session = Session::new(&cli)?;
    match cli.command {
        Command::Constants { eps } => {
            let ctx = session.context(eps)?;
            session.emit("constants.json", &to_json(&ctx.summary())?)
        }
        Command::Transform { eps, nodes } => {
            let ctx = session.context(eps)?;
            let mut csv = String::from("xi,s,ghat\n");
            for (s, g) in ctx.hat_density_grid(nodes.max(2)) {
                csv.push_str(&format!("{},{},{}\n", ctx.xi_of_s(s), s, g));
            }
            session.emit("transform.csv", &csv)
        }
        Command::Solve(a) => solve(&session, a),
        Command::Action { traj, eps, space } => {
            let ctx = session.context(eps)?;
            let t = read_trajectory(&traj, &ctx, space)?;
            session.emit("action.json", &to_json(&action_with(&t, MASS_TOL)?)?)
        }
        Command::Micro { w, um, up, kappa, profile, points } => {
            let kappa = match kappa {
                Some(k) => k,
                None => reaction_constants(&*session.cfg.potential()?)?.kappa,
            };
            let p = minimize_profile(w, um, up, kappa)?;
            let (lower, upper) = m_bounds(w, um, up, kappa)?;
            let summary = json!({ "M": p.value, "lower": lower, "upper": upper, "A": p.a, "B": p.b, "C": p.c });
            session.emit("micro.json", &to_json(&summary)?)?;
            if profile {
                let mut csv = String::from("s,u\n");
                for (s, u) in p.samples(points) {
                    csv.push_str(&format!("{s},{u}\n"));
                }
                session.emit("profile.csv", &csv)?;
            }
            Ok(())
        }
        Command::Limit { u0, t, steps, action } => {
            let k = reaction_constants(&*session.cfg.potential()?)?.k;
            let traj = solve_limit(u0.0, u0.1, k, t, steps)?;
            let mut csv = String::from("t,um,up,w,E0,M\n");
            for n in 0..traj.len() {
                let st = traj.state(n);
                let m = if st.um > 0.0 && st.up > 0.0 { m_value(traj.w[n], st.um, st.up, 1.0 / k)? } else { f64::INFINITY };
                csv.push_str(&format!("{},{},{},{},{},{}\n", traj.times[n], st.um, st.up, traj.w[n], entropy0(st), m));
            }
            session.emit("limit.csv", &csv)?;
            if action {
                session.emit("limit_action.json", &to_json(&action0(&traj, 1.0 / k)?)?)?;
            }
            Ok(())
        }
        Command::Recover(a) => recover(&session, a),
        Command::Particles(a) => particles(&session, a),
        Command::Converge => {
            let report = converge_sweep(&session.cfg)?;
            let dir = session.out.clone().unwrap_or_else(|| session.cfg.out_dir());
            for p in report.write(&dir, &session.cfg.format)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn solve(session: &Session, a: SolveArgs) -> Result<()> {
    let ctx = session.context(a.eps)?;
    let grid = Arc::new(match a.space {
        Space::S => Grid::s_space(&ctx, a.grid)?,
        Space::Xi => Grid::xi_space(&ctx, a.grid)?,
    });
    let u0 = Field::from_initial(grid.clone(), &InitialData::parse(&a.init)?)?;
    let traj = integrate(grid.clone(), a.eps, &u0.values, a.t, a.steps, a.record, |_, _| {})?;
    if a.summary {
        let stamps: Vec<_> = (0..traj.len())
            .map(|n| {
                let u = &traj.values[n];
                json!({
                    "t": traj.times[n],
                    "left": u[0],
                    "right": u[u.len() - 1],
                    "mass": traj.mass(n),
                    "entropy": entropy(&traj.field(n)),
                })
            })
            .collect();
        return session.emit("solve.json", &to_json(&json!({ "eps": a.eps, "space": a.space.coord_name(), "stamps": stamps }))?);
    }
    let mut csv = format!("t,{},u\n", a.space.coord_name());
    for (t, u) in traj.times.iter().zip(&traj.values) {
        for (x, v) in grid.nodes.iter().zip(u) {
            csv.push_str(&format!("{t},{x},{v}\n"));
        }
    }
    session.emit("solve.csv", &csv)
}

/// Reads a long-format `t,x,u` table written by `solve`.
fn read_trajectory(path: &Path, ctx: &EpsilonContext, space: Space) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    let mut times: Vec<f64> = vec![];
    let mut values: Vec<Vec<f64>> = vec![];
    let mut xs: Vec<f64> = vec![];
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidInput(format!("{}:{}: not a number", path.display(), i + 1)))?;
        let [t, x, u] = cols[..] else {
            return Err(Error::InvalidInput(format!("{}:{}: expected t,x,u", path.display(), i + 1)));
        };
        if times.last() != Some(&t) {
            times.push(t);
            values.push(vec![]);
        }
        if times.len() == 1 {
            xs.push(x);
        }
        values.last_mut().unwrap().push(u);
    }
    let n = xs.len();
    if times.len() < 2 || values.iter().any(|v| v.len() != n) {
        return Err(Error::InvalidInput("trajectory needs ≥ 2 stamps with equal node counts".into()));
    }
    let grid = match space {
        Space::S => Grid::s_space(ctx, n)?,
        Space::Xi => Grid::xi_space(ctx, n)?,
    };
    let h = grid.h();
    if xs.iter().zip(&grid.nodes).any(|(a, b)| (a - b).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::InvalidInput("nodes do not match a uniform grid for this eps and space".into()));
    }
    let dt = times[1] - times[0];
    Ok(Trajectory { grid: Arc::new(grid), eps: ctx.eps(), times, values, dt })
}

fn read_curve(path: &Path) -> Result<crate::limit_system::LimitTrajectory> {
    let text = std::fs::read_to_string(path)?;
    let (mut t, mut um, mut up) = (vec![], vec![], vec![]);
    for line in text.lines() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 3 {
            continue;
        }
        // the header row fails to parse and is skipped
        if let (Ok(a), Ok(b), Ok(c)) = (cols[0].trim().parse(), cols[1].trim().parse(), cols[2].trim().parse()) {
            t.push(a);
            um.push(b);
            up.push(c);
        }
    }
    crate::limit_system::LimitTrajectory::from_series(t, um, up)
}

fn recover(session: &Session, a: RecoverArgs) -> Result<()> {
    let mut cfg = session.cfg.recovery.clone();
    if let Some(l) = a.eps_list {
        cfg.eps_list = l;
    }
    if let Some(v) = a.eta {
        cfg.eta = v;
    }
    if let Some(v) = a.width {
        cfg.width = v;
    }
    if let Some(v) = a.nodes {
        cfg.nodes = v;
    }
    if a.fixed {
        cfg.diagonal = false;
    }
    cfg.validate()?;
    let spec = session.cfg.potential()?;
    let k = reaction_constants(&spec)?.k;
    let curve = match a.curve {
        Some(p) => read_curve(&p)?,
        None => reference_curve(k, 1000)?,
    };
    let contexts = cfg
        .eps_list
        .iter()
        .map(|&e| session.context(e).map_err(|err| err.at_eps(e)))
        .collect::<Result<Vec<_>>>()?;
    let reports = recovery_sweep(&curve, &contexts, &cfg)?;
    session.emit("recover.json", &to_json(&reports)?)
}

fn particles(session: &Session, a: ParticleArgs) -> Result<()> {
    let ctx = session.context(a.eps)?;
    let scheme: Scheme = serde_json::from_value(json!(a.scheme))
        .map_err(|_| Error::InvalidInput(format!("unknown scheme '{}'", a.scheme)))?;
    let mut cfg = ParticleConfig::new(a.n, a.t, a.dt, a.seed);
    cfg.bins = a.bins;
    cfg.scheme = scheme;
    cfg.snapshots = (1..=a.snapshots).map(|j| a.t * j as f64 / a.snapshots as f64).collect();
    let study = particle_study(&ctx, &InitialData::parse(&a.init)?, &cfg, a.fp_nodes, a.fp_steps)?;
    let mut csv = String::from("t,bin_center,count\n");
    for h in &study.run.snapshots {
        for (c, n) in h.bin_centers().iter().zip(&h.counts) {
            csv.push_str(&format!("{},{},{}\n", h.t, c, n));
        }
    }
    session.emit("particles.csv", &csv)?;
    let summary = json!({
        "eps": a.eps,
        "n": a.n,
        "dt": study.run.dt,
        "seed": a.seed,
        "scheme": scheme,
        "w1": study.w1.iter().map(|(t, d)| json!({ "t": t, "W1": d })).collect::<Vec<_>>(),
    });
    session.emit("particles.json", &to_json(&summary)?)
}
