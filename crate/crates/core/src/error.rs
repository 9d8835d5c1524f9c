use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// K + τ²I is not numerically positive definite (duplicate points or
    /// a nugget that is too small).
    #[error("Cholesky factorization failed (nugget {nugget:e})")]
    CholeskyFailure { nugget: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("degenerate augmentation: Schur complement {schur:e} <= 1e-12")]
    DegenerateAugmentation { schur: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate design point")]
    DuplicatePoint,

    #[error("every likelihood evaluation was infeasible")]
    AllInfeasible,

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("every candidate was excluded from scoring")]
    AllCandidatesExcluded,

    #[error("point set of size {size} exceeds cap {cap}")]
    SizeOverflow { size: usize, cap: usize },

    #[error("coordinate {dim} = {value} outside [{lo}, {hi}]")]
    OutOfBounds { dim: usize, value: f64, lo: f64, hi: f64 },

    #[error("non-physical intermediate value: {0}")]
    NonPhysical(String),

    #[error("query point is not a member of the lookup grid")]
    NonGridQuery,

    #[error("validation outputs have zero range")]
    ZeroOutputRange,

    #[error("unknown objective '{0}'")]
    UnknownObjective(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from floating-point trouble rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CholeskyFailure { .. }
                | Error::NumericalBreakdown(_)
                | Error::DegenerateAugmentation { .. }
                | Error::AllInfeasible
                | Error::AllCandidatesExcluded
                | Error::NonPhysical(_)
        )
    }
}
