use crate::error::{Result, TensorError};
use crate::spec::LayerSpec;
use crate::tensor::Tensor;

/// Non-overlapping 2x2 mean pooling over `[..., C, H, W]`.
#[derive(Clone, Debug, Default)]
pub struct AvgPool2d {
    input_shape: Option<Vec<usize>>,
}

impl AvgPool2d {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::AvgPool { window: 2 }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.infer(x)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(out)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let (planes, hw) = x.split_trailing(2, "avgpool input")?;
        let (h, w) = (hw[0], hw[1]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(TensorError::OddSpatialDim { height: h, width: w });
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut shape = x.shape().to_vec();
        let r = shape.len();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        let mut out = Tensor::zeros(&shape);
        let src = x.data();
        let dst = out.data_mut();
        for p in 0..planes {
            let ib = p * h * w;
            let ob = p * oh * ow;
            for y in 0..oh {
                for xx in 0..ow {
                    let i = ib + 2 * y * w + 2 * xx;
                    dst[ob + y * ow + xx] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.take().ok_or(TensorError::BackwardBeforeForward("avgpool"))?;
        let r = shape.len();
        let (h, w) = (shape[r - 2], shape[r - 1]);
        let (oh, ow) = (h / 2, w / 2);
        let mut expected = shape.clone();
        expected[r - 2] = oh;
        expected[r - 1] = ow;
        grad_out.expect_shape("avgpool grad_out", &expected)?;
        let planes: usize = shape[..r - 2].iter().product();
        let mut grad_in = Tensor::zeros(&shape);
        let g = grad_out.data();
        let gi = grad_in.data_mut();
        for p in 0..planes {
            for y in 0..oh {
                for xx in 0..ow {
                    let v = 0.25 * g[p * oh * ow + y * ow + xx];
                    let i = p * h * w + 2 * y * w + 2 * xx;
                    gi[i] = v;
                    gi[i + 1] = v;
                    gi[i + w] = v;
                    gi[i + w + 1] = v;
                }
            }
        }
        Ok(grad_in)
    }
}
