use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{kernel}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        kernel: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{kernel}: input contains NaN or Inf")]
    NonFinite { kernel: &'static str },
    #[error("{kernel}: {reason}")]
    InvalidArgument { kernel: &'static str, reason: String },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
}
