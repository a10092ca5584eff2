use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: |A[{row}][{col}] - A[{col}][{row}]| = {gap:e}")]
    NonSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("eigendecomposition failed to converge")]
    NoConvergence,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("reference matrix is singular after regularization")]
    SingularReference,

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("kernel width must be positive, got {0}")]
    NonPositiveWidth(f64),

    #[error("need at least {needed} samples, got {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("zero nearest-neighbour distance (duplicate points); jitter the data")]
    DegenerateDistances,

    #[error("stream of length {len} is shorter than two windows ({needed})")]
    StreamTooShort { len: usize, needed: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Errors caused by the caller's input rather than by a numerical failure.
    pub fn is_usage(&self) -> bool {
        !matches!(
            self,
            Error::NoConvergence | Error::SingularReference | Error::SingularCovariance
        )
    }
}
