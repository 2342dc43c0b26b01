use thiserror::Error;

/// Errors produced by the selection library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmvsError {
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),

    #[error("input contains NaN or infinite values")]
    NonFinite,

    #[error("labels do not match the declared coding at rows {rows:?}")]
    LabelCodingMismatch { rows: Vec<usize> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid design specification: {0}")]
    SpecInvalid(String),

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("dataset too small: need n >= 2 and p >= 1, got n = {n}, p = {p}")]
    TooSmall { n: usize, p: usize },
}

pub type Result<T> = std::result::Result<T, EmvsError>;
