use thiserror::Error;

/// Errors raised by the tensor kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but {actual} values were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("shape {0:?} has a zero-sized or missing dimension")]
    EmptyShape(Vec<usize>),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("odd spatial dimension {height}x{width} cannot be pooled with a 2x2 window")]
    OddSpatialDim { height: usize, width: usize },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("backward called on {0} before a forward pass was recorded")]
    BackwardBeforeForward(&'static str),
}

pub type Result<T> = std::result::Result<T, TensorError>;
