use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Mean squared error over all elements and its gradient w.r.t. `pred`.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            context: "mse",
            expected: pred.shape().to_vec(),
            actual: target.shape().to_vec(),
        });
    }
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let e = p - t;
        loss += e * e;
        *g = 2.0 * e / n;
    }
    Ok((loss / n, grad))
}
