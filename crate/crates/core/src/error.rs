use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("restricted design is rank deficient ({columns} columns)")]
    SingularDesign { columns: usize },

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("estimated coefficient vector is zero; projection direction undefined")]
    DegenerateEstimate,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
