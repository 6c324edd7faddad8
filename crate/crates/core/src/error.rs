use thiserror::Error;

/// Errors raised by the numerical kernels, model evaluation and the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("integrand returned a non-finite value at t = {at}")]
    InvalidIntegrand { at: f64 },
    #[error("no sign change on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    BracketError { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("second derivative {vpp} is not negative at y = {y}")]
    NonConcave { y: f64, vpp: f64 },
    #[error("marginal value {vp} is not positive at y = {y}")]
    DegenerateMarginalValue { y: f64, vp: f64 },
    #[error("policy iteration did not converge after {sweeps} sweeps (last update {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
