use thiserror::Error;

/// Errors raised by model construction, quadrature and the Monte Carlo layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimate {value:e}, error {error:e}")]
    Quadrature { a: f64, b: f64, value: f64, error: f64 },

    #[error("perturbation parameter c = {c} outside the flow range |c| <= {max}")]
    FlowRange { c: f64, max: f64 },

    #[error("characteristic function evaluated at u = 0 where the Levy density is singular")]
    SingularAmplitude,

    #[error("non-integrable configuration: {0}")]
    NonIntegrable(String),

    #[error("parameter theta = {theta} outside the open interval ({lo}, {hi})")]
    ParameterRange { theta: f64, lo: f64, hi: f64 },

    #[error("path became non-finite at t = {t}")]
    InvalidPath { t: f64 },

    #[error("too many degenerate paths: {dropped} of {total} exceeds the allowed fraction {limit}")]
    DropRate { dropped: usize, total: usize, limit: f64 },

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("io: {0}")]
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
