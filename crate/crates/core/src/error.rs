use thiserror::Error;

/// Errors raised by simulation, estimation and scenario code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node budget of {budget} exceeded at time {time:.4}")]
    BudgetExceeded { budget: usize, time: f64 },

    #[error("half-edge pool exhausted: {0}")]
    PoolExhausted(String),

    #[error("state space too large: {n} vertices (limit {limit})")]
    StateSpaceTooLarge { n: usize, limit: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 3 for runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Parse { .. } | Error::StateSpaceTooLarge { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
