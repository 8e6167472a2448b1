use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid target parameter: {0}")]
    InvalidTarget(String),

    #[error("invalid start: log-density is -inf at the initial state")]
    InvalidStart,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),

    #[error("minorization certificate violated: {0}")]
    CertificateViolation(String),

    #[error("randomized schedule requires a random stream")]
    MissingRng,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("incompatible run configuration: {0}")]
    Incompatible(String),

    #[error("non-finite log-density at iteration {iteration}")]
    NumericOverflow { iteration: u64 },

    #[error("iteration budget exceeded: need {needed}, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },

    #[error("matrix `{0}` is not symmetric positive definite")]
    NotSpd(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("test function `{0}` was not registered and samples were thinned")]
    UnregisteredFunction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
