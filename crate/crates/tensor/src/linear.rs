use crate::error::{Result, TensorError};
use crate::init::{glorot_uniform, InitRng};
use crate::param::Param;
use crate::spec::{Activation, LayerSpec};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
struct LinearCache {
    input: Tensor,
    pre: Vec<f64>,
}

/// Fully connected layer mapping `[N, ...]` (flattened per row) to `[N, units]`.
#[derive(Clone, Debug)]
pub struct Linear {
    in_dim: usize,
    units: usize,
    activation: Activation,
    pub weight: Param,
    pub bias: Param,
    cache: Option<LinearCache>,
}

impl Linear {
    pub fn new(in_dim: usize, units: usize, activation: Activation, rng: &mut InitRng) -> Self {
        let weight = glorot_uniform(&[units, in_dim], in_dim, units, rng);
        Self::from_params(in_dim, units, activation, weight, Tensor::zeros(&[units]))
    }

    pub fn from_params(in_dim: usize, units: usize, activation: Activation, weight: Tensor, bias: Tensor) -> Self {
        Self {
            in_dim,
            units,
            activation,
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::FullyConnected {
            in_dim: self.in_dim,
            units: self.units,
            activation: self.activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    fn rows(&self, x: &Tensor) -> Result<usize> {
        let rows = x.shape()[0];
        if x.len() != rows * self.in_dim {
            return Err(TensorError::ShapeMismatch {
                context: "linear input",
                expected: vec![rows, self.in_dim],
                actual: x.shape().to_vec(),
            });
        }
        Ok(rows)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let rows = self.rows(x)?;
        let mut pre = vec![0.0; rows * self.units];
        let w = self.weight.value.data();
        let b = self.bias.value.data();
        for r in 0..rows {
            let xr = &x.data()[r * self.in_dim..(r + 1) * self.in_dim];
            for u in 0..self.units {
                let wr = &w[u * self.in_dim..(u + 1) * self.in_dim];
                pre[r * self.units + u] = b[u] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
            }
        }
        let out: Vec<f64> = match self.activation {
            Activation::Identity => pre.clone(),
            Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
        };
        let out = Tensor::new(vec![rows, self.units], out)?;
        out.ensure_finite("linear forward")?;
        self.cache = Some(LinearCache { input: x.clone(), pre });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(TensorError::BackwardBeforeForward("linear"))?;
        let rows = cache.input.shape()[0];
        grad_out.expect_shape("linear grad_out", &[rows, self.units])?;
        let mut d_pre = grad_out.data().to_vec();
        if self.activation == Activation::Relu {
            for (d, p) in d_pre.iter_mut().zip(&cache.pre) {
                if *p <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let mut grad_in = Tensor::zeros(cache.input.shape());
        let w = self.weight.value.data();
        for r in 0..rows {
            let xr = &cache.input.data()[r * self.in_dim..(r + 1) * self.in_dim];
            let gi = &mut grad_in.data_mut()[r * self.in_dim..(r + 1) * self.in_dim];
            for u in 0..self.units {
                let d = d_pre[r * self.units + u];
                self.bias.grad.data_mut()[u] += d;
                let gw = &mut self.weight.grad.data_mut()[u * self.in_dim..(u + 1) * self.in_dim];
                for (g, xv) in gw.iter_mut().zip(xr) {
                    *g += d * xv;
                }
                let wr = &w[u * self.in_dim..(u + 1) * self.in_dim];
                for (g, wv) in gi.iter_mut().zip(wr) {
                    *g += d * wv;
                }
            }
        }
        grad_in.ensure_finite("linear backward")?;
        Ok(grad_in)
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }

    pub fn params(&self) -> Vec<(&'static str, &Param)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::init_rng;

    #[test]
    fn fc1_shape() {
        let mut fc = Linear::new(2400, 96, Activation::Relu, &mut init_rng(0));
        let y = fc.forward(&Tensor::full(&[3, 2400], 0.01)).unwrap();
        assert_eq!(y.shape(), &[3, 96]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut fc = Linear::from_params(
            3,
            2,
            Activation::Identity,
            Tensor::zeros(&[2, 3]),
            Tensor::new(vec![2], vec![1.5, -4.0]).unwrap(),
        );
        let y = fc.forward(&Tensor::full(&[1, 3], 9.0)).unwrap();
        assert_eq!(y.data(), &[1.5, -4.0]);
    }

    #[test]
    fn identity_matrix() {
        let mut fc = Linear::from_params(
            2,
            2,
            Activation::Identity,
            Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(&[2]),
        );
        let y = fc.forward(&Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let mut fc = Linear::new(4, 2, Activation::Identity, &mut init_rng(0));
        assert!(matches!(
            fc.forward(&Tensor::zeros(&[1, 5])),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }
}
