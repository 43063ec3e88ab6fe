use thiserror::Error;

/// Errors produced by the numerical kernels, analysis routines and samplers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not antisymmetric (relative symmetric part {0:.3e})")]
    NotAntisymmetric(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("degenerate drift: Lyapunov operator is singular")]
    DegenerateDrift,

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("matrix is not traceless (trace {0:.3e})")]
    NotTraceless(f64),

    #[error("configuration violates the analysis conditions: {0}")]
    ConditionsViolated(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("trace condition violated: 2*gamma*Tr_p(C) = {lhs}, Tr(K) = {rhs}")]
    TraceCondition { lhs: f64, rhs: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
