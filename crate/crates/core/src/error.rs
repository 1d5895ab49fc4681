use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e})")]
    NotSpd { min_eig: f64, max_eig: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("matrices do not commute (residual {residual:e}, tolerance {tol:e})")]
    NonCommuting { residual: f64, tol: f64 },
    #[error("state is not centered (mean norm {norm:e})")]
    NotCentered { norm: f64 },
    #[error("update matrix is singular at iteration {iter}")]
    SingularUpdate { iter: usize },
    #[error("positive definiteness lost at step {step}: {source}")]
    SpdLost { step: usize, source: Box<Error> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("empty sample set")]
    EmptySamples,
    #[error("too few points in fit window ({0})")]
    TooFewPoints(usize),
    #[error("nonpositive value {value:e} at t={t} in fit window")]
    NonPositive { t: f64, value: f64 },
    #[error("problem size {size} exceeds cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("root bracket failed: {0}")]
    RootFinding(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
