use thiserror::Error;

/// Errors raised by the sampling, regression and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("column index {index} is outside 0..{n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("matrix is singular (pivot {pivot} fell below tolerance {tolerance:e})")]
    SingularMatrix { pivot: usize, tolerance: f64 },

    #[error("matrix is not full row rank (d = {d}, n = {n})")]
    RankDeficient { d: usize, n: usize },

    #[error("invalid matrix shape: {0}")]
    InvalidShape(String),

    #[error("sherman-morrison denominator vanishes ({denominator:e})")]
    DenominatorVanishes { denominator: f64 },

    #[error("subset size {size} outside the valid range [{min}, {max}]")]
    SizeOutOfRange { size: usize, min: usize, max: usize },

    #[error("numeric breakdown: total removal weight {total:e} with {survivors} survivors")]
    NumericBreakdown { total: f64, survivors: usize },

    #[error("enumeration requires {count} items, cap is {cap}")]
    TooManySubsets { count: u128, cap: u128 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
