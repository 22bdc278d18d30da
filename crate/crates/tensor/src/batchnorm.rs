use crate::error::{Result, TensorError};
use crate::param::Param;
use crate::spec::LayerSpec;
use crate::tensor::Tensor;
use crate::Mode;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    mode: Mode,
}

/// Per-channel batch normalisation over `[..., C, H, W]` inputs.
///
/// In train mode the statistics are taken over every leading dimension and
/// both spatial axes; running statistics move towards the batch statistics
/// with momentum [`BN_MOMENTUM`]. Eval mode uses the running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(Tensor::full(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            cache: None,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::BatchNorm { channels: self.channels }
    }

    fn layout(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (lead, chw) = x.split_trailing(3, "batchnorm input")?;
        if chw[0] != self.channels {
            return Err(TensorError::ShapeMismatch {
                context: "batchnorm channels",
                expected: vec![self.channels],
                actual: vec![chw[0]],
            });
        }
        Ok((lead, chw[1] * chw[2]))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (lead, hw) = self.layout(x)?;
        let c = self.channels;
        let count = (lead * hw) as f64;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for b in 0..lead {
                    for (ch, m) in mean.iter_mut().enumerate() {
                        let off = (b * c + ch) * hw;
                        *m += x.data()[off..off + hw].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                for b in 0..lead {
                    for ch in 0..c {
                        let off = (b * c + ch) * hw;
                        let m = mean[ch];
                        var[ch] += x.data()[off..off + hw].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= count);
                let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                for ch in 0..c {
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean[ch];
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var[ch] * unbiased;
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.data().to_vec(), self.running_var.data().to_vec()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let mut x_hat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        for b in 0..lead {
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                let (m, s) = (mean[ch], inv_std[ch]);
                let (g, bt) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
                for i in off..off + hw {
                    let xh = (x.data()[i] - m) * s;
                    x_hat.data_mut()[i] = xh;
                    out.data_mut()[i] = g * xh + bt;
                }
            }
        }
        out.ensure_finite("batchnorm forward")?;
        self.cache = Some(BnCache { x_hat, inv_std, mode });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(TensorError::BackwardBeforeForward("batchnorm"))?;
        grad_out.expect_shape("batchnorm grad_out", cache.x_hat.shape())?;
        let (lead, hw) = self.layout(grad_out)?;
        let c = self.channels;
        let count = (lead * hw) as f64;
        let dy = grad_out.data();
        let xh = cache.x_hat.data();
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xh = vec![0.0; c];
        for b in 0..lead {
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    sum_dy[ch] += dy[i];
                    sum_dy_xh[ch] += dy[i] * xh[i];
                }
            }
        }
        for ch in 0..c {
            self.gamma.grad.data_mut()[ch] += sum_dy_xh[ch];
            self.beta.grad.data_mut()[ch] += sum_dy[ch];
        }
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for b in 0..lead {
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                let g = self.gamma.value.data()[ch];
                let s = cache.inv_std[ch];
                for i in off..off + hw {
                    grad_in.data_mut()[i] = match cache.mode {
                        Mode::Train => {
                            g * s * (dy[i] - sum_dy[ch] / count - xh[i] * sum_dy_xh[ch] / count)
                        }
                        Mode::Eval => g * s * dy[i],
                    };
                }
            }
        }
        grad_in.ensure_finite("batchnorm backward")?;
        Ok(grad_in)
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![("gamma", &mut self.gamma), ("beta", &mut self.beta)]
    }

    pub fn params(&self) -> Vec<(&'static str, &Param)> {
        vec![("gamma", &self.gamma), ("beta", &self.beta)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_normalises_to_zero() {
        let mut bn = BatchNorm2d::new(2);
        let y = bn.forward(&Tensor::full(&[3, 2, 4, 4], 7.5), Mode::Train).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn affine_on_standardised_input() {
        let mut bn = BatchNorm2d::new(1);
        bn.gamma.value = Tensor::full(&[1], 2.0);
        bn.beta.value = Tensor::full(&[1], 3.0);
        // zero mean, unit (biased) variance
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        let scale = 1.0 / (1.0 + BN_EPSILON).sqrt();
        for (xi, yi) in x.data().iter().zip(y.data()) {
            assert!((yi - (2.0 * xi * scale + 3.0)).abs() < 1e-12);
            assert!((yi - (2.0 * xi + 3.0)).abs() < 1e-4);
        }
    }

    #[test]
    fn eval_with_default_stats_is_identity() {
        let mut bn = BatchNorm2d::new(3);
        let x = Tensor::new(vec![1, 3, 1, 2], vec![0.5, -2.0, 3.0, 0.0, 1.0, -0.25]).unwrap();
        let y = bn.forward(&x, Mode::Eval).unwrap();
        let s = 1.0 / (1.0 + BN_EPSILON).sqrt();
        for (xi, yi) in x.data().iter().zip(y.data()) {
            assert!((yi - xi * s).abs() < 1e-12);
        }
        // the epsilon is the only deviation from identity
        assert!(x.max_abs_diff(&y) < 1e-5 * 3.0);
    }

    #[test]
    fn running_stats_only_move_in_train_mode() {
        let mut bn = BatchNorm2d::new(1);
        let x = Tensor::new(vec![1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        bn.forward(&x, Mode::Eval).unwrap();
        assert_eq!(bn.running_mean.data(), &[0.0]);
        assert_eq!(bn.running_var.data(), &[1.0]);
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean.data()[0] - 0.2).abs() < 1e-15);
        // unbiased batch variance is 2
        assert!((bn.running_var.data()[0] - (0.9 + 0.2)).abs() < 1e-15);
    }
}
