use thiserror::Error;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("lambda must be > 0, got {0}")]
    NonPositiveLambda(f64),

    #[error("{field} must be >= 0, got {value}")]
    NegativeRate { field: &'static str, value: f64 },

    #[error("d must be >= 1")]
    ZeroD,

    #[error("d = {d} exceeds the configured bound {max}")]
    DTooLarge { d: usize, max: usize },

    #[error("{field} is not finite")]
    NonFiniteInput { field: &'static str },

    #[error("tolerance must lie in (0, 1), got {0}")]
    InvalidTolerance(f64),

    #[error("truncated stationary system is singular")]
    SingularSystem,

    #[error("sub-generator is singular")]
    SingularSubgenerator,

    #[error("U-measure at index {index} is singular")]
    SingularU { index: usize },

    #[error("truncation level {l_max} must exceed d = {d}")]
    TruncationTooSmall { l_max: usize, d: usize },

    #[error("no convergence below level cap {cap} (last relative change {last_change:e})")]
    NoConvergence { cap: usize, last_change: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
