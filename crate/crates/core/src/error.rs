use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("point {point:?} lies outside the admissible region {region}")]
    OutsideDomain { point: Vec<f64>, region: String },

    #[error("kernel is singular at y = 0")]
    Singular,

    #[error("input field is not supported inside the domain (max |f| outside = {max_outside:e})")]
    NotCompactlySupported { max_outside: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("no admissible radius on the search lattice for delta = {delta}")]
    NoAdmissibleRadius { delta: f64 },

    #[error("zero-mean condition violated: |integral| = {integral:e} exceeds {tolerance:e}")]
    ZeroMeanViolated { integral: f64, tolerance: f64 },

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("linear solver failed: {reason} (residual {residual:e})")]
    Solver { reason: String, residual: f64 },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
