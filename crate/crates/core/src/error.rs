use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Factorization or solve failure (non-SPD matrix, singular Hessian).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit did not converge after {iterations} iterations (last iterate {last:?})")]
    Convergence { iterations: usize, last: Vec<f64> },

    #[error("parameter mapping: {0}")]
    Mapping(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("self-test failed: {0}")]
    SelfTest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            Error::SelfTest(_) => 4,
            _ => 1,
        }
    }
}
