use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Variants fall in two groups: input validation ([`Error::is_validation`])
/// and numerical failures. The CLI maps them to exit codes 1 and 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("potential check failed: {0}")]
    Potential(String),

    #[error("epsilon {eps} outside the operating range [{min}, {max}]")]
    EpsilonRange { eps: f64, min: f64, max: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (last change {last_change:e})")]
    Quadrature { a: f64, b: f64, last_change: f64 },

    #[error("overflow guard: exponent {0} exceeds the representable range")]
    Overflow(f64),

    #[error("transform table is not strictly increasing at node {0}")]
    Monotonicity(usize),

    #[error("tridiagonal solve failed: pivot {pivot:e} at row {row}")]
    LinearSolve { row: usize, pivot: f64 },

    #[error("mass drift {drift:e} exceeds tolerance {tol:e}")]
    MassDrift { drift: f64, tol: f64 },

    #[error("newton iteration did not converge after {0} iterations")]
    Newton(usize),

    #[error("step-size guard: drift*dt = {0} > 0.5")]
    StepSize(f64),

    #[error("negative density {value:e} at node {node} after mass correction")]
    NegativeDensity { node: usize, value: f64 },

    #[error("io: {0}")]
    Io(String),

    #[error("at eps = {eps}: {source}")]
    AtEpsilon { eps: f64, source: Box<Error> },
}

impl Error {
    pub fn is_validation(&self) -> bool {
        match self {
            Error::AtEpsilon { source, .. } => source.is_validation(),
            e => matches!(
                e,
                Error::InvalidInput(_) | Error::Potential(_) | Error::EpsilonRange { .. } | Error::Io(_)
            ),
        }
    }

    /// Tags the error with the `ε` of the run that produced it.
    pub fn at_eps(self, eps: f64) -> Self {
        Error::AtEpsilon { eps, source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
