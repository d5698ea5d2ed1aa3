use thiserror::Error;

/// Crate-wide error type.
///
/// `InvalidParameter`, `NonFinite` and `Domain` are validation failures
/// (CLI exit code 2); the remaining variants are numerical failures
/// (CLI exit code 3).
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stiffness failure at t = {t}: step size underflow below 1e-14 at ({x}, {y})")]
    Stiffness { t: f64, x: f64, y: f64 },

    #[error("no cycle detected at the start of the probe path")]
    NoCycleAtStart,

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::NonFinite(_) | Error::Domain(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
