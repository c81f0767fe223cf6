use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("numerically singular pilot covariance for UE {k}, AP {l} (condition number {cond:.3e})")]
    Singular { k: usize, l: usize, cond: f64 },

    #[error("degenerate AP {l}: all estimate covariances vanish")]
    DegenerateAp { l: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("internal numerical error: {0}")]
    Numerical(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
