//! Crate-wide error type.

use thiserror::Error;

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Malformed expression source; `offset` is a byte offset into the input.
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    /// A symbol other than `t` or a known function name.
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },

    /// Scalar expression evaluation failed (domain error or non-finite result).
    #[error("evaluation error at t = {t}: {cause}")]
    Eval { t: f64, cause: String },

    /// Matrix entry evaluation failed; carries the entry position.
    #[error("evaluation error in entry ({row},{col}) at t = {t}: {cause}")]
    EvalEntry {
        row: usize,
        col: usize,
        t: f64,
        cause: String,
    },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// Adaptive integration gave up (step-size underflow or non-finite state).
    #[error("integration failure at time {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    /// Finite-difference derivative came out non-finite.
    #[error("non-finite derivative near t = {time}")]
    NonFiniteDerivative { time: f64 },

    /// Envelope fit has no feasible point under the requested constraints.
    #[error("infeasible envelope fit: {reason}")]
    InfeasibleFit { reason: String },

    /// Sample grid cannot support the requested fit.
    #[error("degenerate grid: {reason}")]
    DegenerateGrid { reason: String },

    /// At some grid `t` the observability Gramian stays numerically singular
    /// for every sampled window length.
    #[error("not observable on grid: no window makes M(t, t+sigma) positive definite at t = {t}")]
    NotObservableOnGrid { t: f64 },

    /// Controllability analogue of `NotObservableOnGrid`.
    #[error("not controllable on grid: no window makes W(t, t+sigma) positive definite at t = {t}")]
    NotControllableOnGrid { t: f64 },

    /// A theorem hypothesis does not hold for the fitted constants.
    #[error("hypothesis unmet: {condition}")]
    HypothesisUnmet { condition: String },

    #[error("invalid configuration: {message}")]
    InvalidConfig { message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("json error: {0}")]
    Json(String),
}

impl Error {
    pub fn dimension(context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
