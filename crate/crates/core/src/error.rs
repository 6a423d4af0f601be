use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("constraint leaves no free directions (M = {0}, need M >= 2)")]
    NoFreeDirections(usize),

    /// The projected information matrix is singular or too badly conditioned
    /// to invert, so the missing-mass bound does not exist at this point.
    #[error(
        "regularity condition fails: projected missing-mass information is singular \
         or ill-conditioned (condition estimate {condition:.3e}, cap {cap:.1e})"
    )]
    SingularInformation { condition: f64, cap: f64 },

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "enumeration needs {states:.3e} states, above the cutoff of {cutoff}; \
         use Monte Carlo mode instead"
    )]
    EnumerationTooLarge { states: f64, cutoff: u64 },

    #[error("invalid estimator spec `{spec}`: {reason}")]
    EstimatorSpec { spec: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal identity violated: {0}")]
    Identity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
