use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("linear system is singular (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
    },

    #[error("{0}")]
    Degenerate(String),

    #[error("model is untrained: {0}")]
    Untrained(&'static str),

    #[error("value saturates: {0}")]
    Saturation(String),

    #[error("malformed {format} input: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Short machine-readable kind tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::NonFinite(_) => "non_finite",
            Error::Singular { .. } => "singular",
            Error::NotConverged { .. } => "not_converged",
            Error::Degenerate(_) => "degenerate",
            Error::Untrained(_) => "untrained",
            Error::Saturation(_) => "saturation",
            Error::Format { .. } => "format",
            Error::Stage { .. } => "stage",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
