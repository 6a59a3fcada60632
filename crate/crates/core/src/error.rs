use thiserror::Error;

/// Everything that can go wrong while building states, simulating records or
/// reconstructing them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of basis: {0}")]
    IndexOutOfBasis(String),

    #[error("truncation discards {lost:.3e} of the probability mass (limit {limit:.0e})")]
    Truncation { lost: f64, limit: f64 },

    #[error("not a quantum state: {0}")]
    NotAQuantumState(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("basis mismatch: {0}")]
    Basis(String),

    #[error("spatial grid does not cover the basis: {0}")]
    GridCoverage(String),

    #[error("insufficient phase coverage: {0}")]
    Coverage(String),

    #[error("characteristic function still {edge:.3e} at the edge of the eta axis; widen it")]
    FilterTruncation { edge: f64 },

    #[error("inversion failed: {0}")]
    Inversion(String),

    #[error("position moment of order {order} does not converge on the grid (tail {tail:.3e})")]
    MomentDivergence { order: u32, tail: f64 },

    #[error("moment system is rank deficient beyond the predicted collisions: {0}")]
    NumericalRank(String),

    #[error("record holds binned distributions only; joint per-shot samples are required")]
    NeedsJointSamples,

    #[error("diagonal elements are unrecoverable with periodic boundaries: a vanishing index difference integrates to the trace ({0})")]
    DiagonalUnrecoverable(String),

    #[error("index pair parity mismatch: {0}")]
    Parity(String),

    #[error("index pair outside the box domain (need nu > |beta|): {0}")]
    IndexDomain(String),

    #[error("energy scales are commensurable: {0}")]
    Incommensurability(String),

    #[error(
        "leakage bound {bound:.3e} exceeds tolerance {tolerance:.3e}; record a longer time span"
    )]
    InsufficientTimeSpan { bound: f64, tolerance: f64 },

    #[error("time grid unsuitable for exact quadrature: {0}")]
    TimeGrid(String),

    #[error("off-diagonal data are inconsistent with any density matrix: {0}")]
    InconsistentData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
