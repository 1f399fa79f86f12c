use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("self-similarity of sample {row} is not strictly positive ({value})")]
    SelfSimilarity { row: usize, value: f64 },
    #[error("zero base distance: all sampled points coincide")]
    ZeroBaseDistance,
    #[error("sample {0} has zero norm under cosine normalization")]
    ZeroNorm(usize),
    #[error("insufficient neighbors in row {row}: {positive} positive similarities, {k} required")]
    InsufficientNeighbors { row: usize, positive: usize, k: usize },
    #[error("kernel weight {0} is zero")]
    ZeroWeight(usize),
    #[error("residual of kernel {kernel} is negative ({value})")]
    NegativeResidual { kernel: usize, value: f64 },
    #[error("{requested} clusters requested but only {distinct} distinct points")]
    TooFewDistinct { requested: usize, distinct: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {row}: {reason}")]
    RowSource { row: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
