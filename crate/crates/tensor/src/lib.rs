//! Minimal deterministic tensor and layer kernel.
//!
//! Every layer records what it needs during `forward` and consumes it in
//! `backward`, accumulating parameter gradients and returning the gradient
//! w.r.t. its input. All arithmetic is `f64`; no global state, no threads.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod convlstm;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod layer;
pub mod linear;
pub mod loss;
pub mod param;
pub mod pool;
pub mod spec;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use batchnorm::BatchNorm2d;
pub use conv::Conv2d;
pub use convlstm::ConvLstm;
pub use error::{Result, TensorError};
pub use init::{init_rng, InitRng};
pub use layer::{Layer, Sequential};
pub use linear::Linear;
pub use loss::mse;
pub use param::Param;
pub use pool::AvgPool2d;
pub use spec::{count_ops, Activation, LayerSpec, OpCounts};
pub use tensor::Tensor;

/// Batch-norm behaviour selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
