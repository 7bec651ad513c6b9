use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("derivative order {order} exceeds the supported maximum of {max}")]
    UnsupportedOrder { order: u32, max: u32 },

    #[error("coefficient field returned a non-finite value at point {index}")]
    CoefficientField { index: usize },

    #[error("factorization failed: {reason}{}", suggested_mu.map(|m| format!(" (try mu >= {m:e})")).unwrap_or_default())]
    Factorization { reason: String, suggested_mu: Option<f64> },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("manufactured solution for `{case}` is inconsistent: residual rms {rms:e}")]
    Manufactured { case: String, rms: f64 },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::UnsupportedOrder { .. } => "unsupported-order",
            Error::CoefficientField { .. } => "coefficient-field",
            Error::Factorization { .. } => "factorization",
            Error::NonFinite(_) => "non-finite",
            Error::Manufactured { .. } => "manufactured-inconsistency",
            Error::UnknownProblem(_) => "unknown-problem",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
