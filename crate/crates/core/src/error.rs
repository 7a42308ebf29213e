use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quantity that must exist by construction (a maximum, a nonempty set) was not found.
    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("tolerance exceeded: {what} = {value:e} (limit {limit:e})")]
    Tolerance {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("numerical failure: {msg}")]
    Numerical {
        msg: String,
        /// Best iterate reached before giving up, when one exists.
        best: Option<Vec<f64>>,
    },

    #[error("step budget exceeded: {steps} steps requested (limit {limit})")]
    Budget { steps: f64, limit: f64 },

    #[error("inconclusive classification: {reason}")]
    Inconclusive { reason: String, vbar_trace: Vec<f64> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            msg: msg.into(),
            best: None,
        }
    }
}
