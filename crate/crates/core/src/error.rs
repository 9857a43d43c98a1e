use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Hilbert space dimension {dim} exceeds the configured cap {cap}")]
    Capacity { dim: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular geometry: {0}")]
    Singular(String),

    #[error("rank-deficient least-squares design: {0}")]
    RankDeficient(String),

    #[error("matrix is not Hermitian (residual {residual:.3e}) in {context}")]
    NotHermitian { context: String, residual: f64 },

    #[error("eigensolver failed at {context}")]
    Eigen { context: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
