use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// A parameter combination violates a condition some result depends on.
    #[error("admissibility error: {condition} violated ({detail})")]
    Admissibility { condition: String, detail: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("fields live on different domains")]
    DomainMismatch,

    #[error("blow-up at t = {time}: |u|_H = {norm_h:e} (limit {limit:e})")]
    BlowUp { time: f64, norm_h: f64, limit: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn admissibility(condition: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Admissibility {
            condition: condition.into(),
            detail: detail.into(),
        }
    }

    /// Short machine-readable tag, used in failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Admissibility { .. } => "admissibility",
            Error::Parse { .. } => "parse",
            Error::DomainMismatch => "domain_mismatch",
            Error::BlowUp { .. } => "blow_up",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
