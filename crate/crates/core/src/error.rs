use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {0}: only d = 2 and d = 3 are supported")]
    Dimension(usize),

    #[error("invalid index: {0}")]
    Index(String),

    #[error("matrix is not symmetric: asymmetry {asymmetry:e} exceeds tolerance {tol:e}")]
    Asymmetric { asymmetry: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tol:e}")]
    NegativeEigenvalue { eigenvalue: f64, tol: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ellipticity margin {0} is not positive: initial data is concentrated on a hyperplane")]
    Degenerate(f64),

    #[error("non-finite velocity in particle {particle} at t = {time}")]
    BlowUp { particle: usize, time: f64 },

    #[error("time step {dt:e} violates the stability bound; admissible dt <= {max_dt:e}")]
    Cfl { dt: f64, max_dt: f64 },

    #[error("density became negative ({value:e} at node ({i}, {j}), t = {time})")]
    Negativity { value: f64, i: usize, j: usize, time: f64 },

    #[error("rejection sampler acceptance rate {0:.4} is below 1%")]
    LowAcceptance(f64),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("value must be strictly positive, got {0}")]
    NonPositive(f64),

    #[error("io error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
