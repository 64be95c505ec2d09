use thiserror::Error;

/// Errors raised by the lattice and approximation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("smoothness alpha must exceed 1/2, got {0}")]
    InvalidAlpha(f64),

    #[error("alpha = {0} is not supported here (exact Bernoulli forms exist for alpha in {{1, 2, 3}})")]
    UnsupportedAlpha(f64),

    #[error("weight gamma_{index} = {value} outside [0, 1]")]
    InvalidWeight { index: usize, value: f64 },

    #[error("zeta(s) requires s > 1, got {0}")]
    ZetaDomain(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0} is not prime")]
    NotPrime(u64),

    #[error("index set exceeds cap of {cap} members")]
    CapExceeded { cap: usize },

    #[error("problem size infeasible: {0}")]
    Infeasible(String),

    #[error("empty lambda grid")]
    EmptyGrid,

    #[error("negative squared criterion {0} beyond rounding tolerance")]
    NegativeCriterion(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
