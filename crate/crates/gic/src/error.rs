use thiserror::Error;

#[derive(Debug, Error)]
pub enum GicError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid budget {0}: must be finite and nonnegative")]
    InvalidBudget(f64),

    #[error("invalid tolerance {0}: must be positive")]
    InvalidTolerance(f64),

    #[error("feature {feature}: direction restriction yields lower bound {lower} above upper bound {upper}")]
    ContradictoryDirection {
        feature: usize,
        lower: f64,
        upper: f64,
    },

    #[error(
        "instance value {value} of feature {feature} lies outside its bounds [{lower}, {upper}]"
    )]
    InstanceOutOfBounds {
        feature: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GicError>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(GicError::Dimension {
            context,
            expected,
            found,
        })
    }
}
