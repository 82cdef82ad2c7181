use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid feature space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("combination {0:?} is outside the feature space")]
    OutOfSpace(Vec<usize>),

    #[error("profile operation called in single-profile mode")]
    SingleProfileMode,

    #[error("malformed partition matrix: {0}")]
    MalformedSigma(String),

    #[error("partition does not cover the expected universe: {0}")]
    Coverage(String),

    #[error("pool {pool} has no observations")]
    EmptyPool { pool: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing weight for combination {0}")]
    MissingWeight(usize),

    #[error("search space too large: {0}")]
    TooLarge(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("rashomon set exceeded the cardinality cap of {cap}")]
    CapExceeded { cap: usize, partial: Box<crate::enumerate::RashomonSet> },

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
