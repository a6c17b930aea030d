//! Numerical laboratory for the large-activation-energy limit of a
//! double-well Fokker–Planck equation, where diffusion over the barrier
//! turns into a two-state reaction `A ⇌ B`.
//!
//! The crate is organised bottom-up:
//!
//! * [`potential`]: the double-well `H` and the Kramers rate `k`.
//! * [`measures`]: `Z_ε`, `τ_ε`, the rescaling `ŝ_ε` and `ĝ_ε`.
//! * [`fp_solver`]: implicit finite-volume solvers in `ξ` and in `s`.
//! * [`functionals`]: entropy, flux reconstruction, dissipation and action.
//! * [`micro_m`]: the cell problem `M(w; u±)` and its minimising profile.
//! * [`limit_system`]: the two-state reaction ODE and its gradient structure.
//! * [`particles`]: Brownian particles and the empirical measure.
//! * [`recovery`]: recovery sequences for limit curves.
//! * [`experiments`]: convergence sweeps and reports; [`cli`] wraps
//!   everything as subcommands of the `kramers` binary.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod fp_solver;
pub mod functionals;
pub mod interp;
pub mod limit_system;
pub mod measures;
pub mod micro_m;
pub mod particles;
pub mod potential;
pub mod quadrature;
pub mod recovery;
pub mod tridiag;

pub use error::{Error, Result};
pub use measures::EpsilonContext;
pub use potential::PotentialSpec;
