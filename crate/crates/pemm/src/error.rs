//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes incompatible for an operation.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: String, detail: String },

    /// A NaN or infinity showed up where only finite values are allowed.
    #[error("non-finite value in {op}: {detail}")]
    NonFinite { op: String, detail: String },

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: String, detail: String },

    /// Malformed input file or document.
    #[error("parse error at {location}: {detail}")]
    Parse { location: String, detail: String },

    /// Invalid configuration or command usage.
    #[error("config error: {0}")]
    Config(String),

    /// An iterative procedure blew up.
    #[error("divergence at {location}: {detail}")]
    Divergence { location: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch { op: op.into(), detail: detail.into() }
    }

    pub fn non_finite(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NonFinite { op: op.into(), detail: detail.into() }
    }

    pub fn domain(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Domain { op: op.into(), detail: detail.into() }
    }

    pub fn parse(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), detail: detail.into() }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Error::Config(detail.into())
    }

    pub fn divergence(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Divergence { location: location.into(), detail: detail.into() }
    }

    /// Process exit code for the CLI: 1 for usage/config/input problems,
    /// 2 for runtime numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 1,
            Error::ShapeMismatch { .. }
            | Error::NonFinite { .. }
            | Error::Domain { .. }
            | Error::Divergence { .. } => 2,
        }
    }
}
