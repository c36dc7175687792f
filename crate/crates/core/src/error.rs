use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A caller-supplied argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two curves (or a curve and a weight matrix) do not share a basis.
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    /// Inputs that must be conformable are not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A design contains coincident runs, so distance-based criteria blow up.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// A correlation matrix could not be factorized even after jitter escalation.
    #[error("ill-conditioned data: {0}")]
    IllConditioned(String),
}

pub type Result<T> = std::result::Result<T, Error>;
