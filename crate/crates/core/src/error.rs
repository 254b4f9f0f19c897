use thiserror::Error;

/// Errors raised by the estimation and filtering routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data validation failed: {0}")]
    DataValidation(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("degenerate innovation variance at step {step}")]
    DegenerateVariance { step: usize },
    #[error("wrong curvature: information matrix has eigenvalue {eigenvalue:.3e}")]
    WrongCurvature { eigenvalue: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by inputs rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidArgument(_)
                | Error::DataValidation(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
