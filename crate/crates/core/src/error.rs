use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A concave component failed parameter validation.
    #[error("invalid {kind} parameters: {reason}")]
    InvalidConcave { kind: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid label at observation {index}: {reason}")]
    InvalidLabel { index: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("all case weights are zero")]
    ZeroWeights,

    #[error("expected {expected} features, found {found}")]
    FeatureMismatch { expected: usize, found: usize },

    #[error("non-finite {what} at round {round}, observation {observation}")]
    NonFinite {
        what: &'static str,
        round: usize,
        observation: usize,
    },

    #[error("objective increased by {increase:e} at outer iteration {iteration}")]
    MmViolation { iteration: usize, increase: f64 },

    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: u64,
        column: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error stems from bad input data rather than bad parameters
    /// or a numeric breakdown.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidLabel { .. }
                | Error::EmptyDataset
                | Error::FeatureMismatch { .. }
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::MmViolation { .. } | Error::ZeroWeights
        )
    }
}
