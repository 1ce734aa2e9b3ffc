use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; `field` names the offending key or pair.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// Precondition on a domain value failed.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Loaded artifact violates a structural invariant.
    #[error("invalid {what}: {message}")]
    Invariant { what: &'static str, message: String },

    /// An inner GAMP solve produced non-finite values.
    #[error("solver diverged during {stage} at iteration {iteration}")]
    Diverged { stage: &'static str, iteration: usize },

    /// Non-finite denoiser input.
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("cache mismatch: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
