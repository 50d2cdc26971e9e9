use thiserror::Error;

/// Errors raised by the growth, evolution and analysis kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("slit {index}: {source}")]
    Slit {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singularity: {0}")]
    Singular(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("cusp blow-up at t = {t}: {detail}")]
    Cusp { t: f64, detail: String },

    #[error("box exhausted: {0}")]
    BoxExhausted(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
