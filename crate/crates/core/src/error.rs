use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("negative time {0} (semigroup evaluated for t >= 0 only)")]
    NegativeTime(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("generator is not stable: spectral abscissa {abscissa:.3e} >= 0")]
    Unstable { abscissa: f64 },

    #[error("eigenvector basis ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("no singular component: F(t) vanishes identically")]
    NoSingularComponent,

    #[error("horizon mismatch: {0}")]
    HorizonMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{method} did not converge after {iterations} iterations (last step {last:.3e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("Riccati solution blew up at t = {t} (norm {norm:.3e})")]
    BlowUp { t: f64, norm: f64 },

    #[error("Hamiltonian has eigenvalues on the imaginary axis (min |Re| = {0:.3e})")]
    ImaginaryAxis(f64),

    #[error("candidate outside admissible closed-loop set (abscissa {0:.3e})")]
    ClosedLoopUnstable(f64),

    #[error("precheck failed: {0}")]
    PrecheckFailed(String),

    #[error("class membership violated: {0}")]
    ClassViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
