use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("hessian is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unknown parameter `{0}`")]
    UnknownField(String),

    #[error("riccati solve failed: {reason} (residual {residual:.3e})")]
    Riccati { reason: String, residual: f64 },

    #[error("decoupling matrix is near singular (condition number {0:.3e})")]
    SingularDecoupling(f64),

    #[error("state outside model domain: {0}")]
    Domain(String),

    #[error("integration produced a non-finite state at t = {t}: {state:?}")]
    NonFinite { t: f64, state: Vec<f64> },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
