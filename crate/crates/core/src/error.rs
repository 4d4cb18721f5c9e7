use thiserror::Error;

/// Errors raised by model evaluation, discretization, integration and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the function is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameterization produced a physically meaningless value
    /// (negative rate, inverted masses, ...).
    #[error("invalid model: {0}")]
    ModelValidity(String),

    /// Configuration problem; `key` names the offending entry.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// The state or a derived quantity became non-finite.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A single implicit step could not be completed.
    #[error("step failed at t = {t}: {reason} (last residual {residual:e})")]
    StepFailure { t: f64, residual: f64, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Two runs being compared do not share a time grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
