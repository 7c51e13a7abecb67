use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mass: {0}")]
    InvalidMass(String),
    #[error("invalid mass specification: {0}")]
    InvalidSpec(String),
    #[error("floating-point overflow: {0}")]
    Overflow(String),
    #[error("explicit mass sequence exhausted after {0} terms")]
    SequenceExhausted(usize),
    #[error("time {t} is outside (0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("index {index} is outside 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("insufficient probe data: {0}")]
    InsufficientData(String),
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("path accessed at {t} beyond its horizon {horizon}")]
    IncoherentAccess { t: f64, horizon: f64 },
    #[error("sampling budget too small: {0}")]
    BudgetTooSmall(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("inconsistent transfer: {0}")]
    InconsistentTransfer(String),
}

pub type Result<T> = std::result::Result<T, Error>;
