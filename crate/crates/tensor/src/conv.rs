//! Same-padded 2-D convolution.
//!
//! Inputs are `[..., C, H, W]`; all leading dimensions are treated as
//! independent images (batch and time are folded together), so a sequence
//! of frames is convolved frame by frame.

use crate::error::{Result, TensorError};
use crate::init::{glorot_uniform, InitRng};
use crate::param::Param;
use crate::spec::LayerSpec;
use crate::tensor::Tensor;

/// Geometry shared by the plane-level kernels below.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PlaneGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl PlaneGeom {
    /// Iterates every kernel tap as `(tap index, dy, dx, y range, x range)`
    /// restricted to positions whose source pixel lies inside the image.
    fn taps(&self) -> impl Iterator<Item = (usize, isize, isize, std::ops::Range<usize>, std::ops::Range<usize>)> + '_ {
        let pad = (self.k / 2) as isize;
        let (h, w) = (self.h as isize, self.w as isize);
        (0..self.k * self.k).filter_map(move |tap| {
            let dy = (tap / self.k) as isize - pad;
            let dx = (tap % self.k) as isize - pad;
            let ys = (-dy).max(0)..(h - dy).min(h);
            let xs = (-dx).max(0)..(w - dx).min(w);
            if ys.is_empty() || xs.is_empty() {
                return None;
            }
            Some((tap, dy, dx, ys.start as usize..ys.end as usize, xs.start as usize..xs.end as usize))
        })
    }
}

/// `out[o] += sum_i weight[o, i] * input[i]` (correlation, zero padding).
pub(crate) fn conv_plane_forward(g: PlaneGeom, input: &[f64], weight: &[f64], out: &mut [f64]) {
    let hw = g.h * g.w;
    let kk = g.k * g.k;
    for o in 0..g.c_out {
        let out_plane = &mut out[o * hw..(o + 1) * hw];
        for i in 0..g.c_in {
            let in_plane = &input[i * hw..(i + 1) * hw];
            let wbase = (o * g.c_in + i) * kk;
            for (tap, dy, dx, ys, xs) in g.taps() {
                let wv = weight[wbase + tap];
                let n = xs.len();
                for y in ys {
                    let src_y = (y as isize + dy) as usize;
                    let src_x = (xs.start as isize + dx) as usize;
                    let dst = &mut out_plane[y * g.w + xs.start..y * g.w + xs.start + n];
                    let src = &in_plane[src_y * g.w + src_x..src_y * g.w + src_x + n];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += wv * s;
                    }
                }
            }
        }
    }
}

/// Accumulates `grad_in` and `grad_w` for one image given `grad_out`.
pub(crate) fn conv_plane_backward(
    g: PlaneGeom,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_in: Option<&mut [f64]>,
    grad_w: &mut [f64],
) {
    let hw = g.h * g.w;
    let kk = g.k * g.k;
    let mut grad_in = grad_in;
    for o in 0..g.c_out {
        let gout = &grad_out[o * hw..(o + 1) * hw];
        for i in 0..g.c_in {
            let in_plane = &input[i * hw..(i + 1) * hw];
            let wbase = (o * g.c_in + i) * kk;
            for (tap, dy, dx, ys, xs) in g.taps() {
                let wv = weight[wbase + tap];
                let n = xs.len();
                let mut acc = 0.0;
                for y in ys {
                    let src_y = (y as isize + dy) as usize;
                    let src_x = (xs.start as isize + dx) as usize;
                    let go = &gout[y * g.w + xs.start..y * g.w + xs.start + n];
                    let src = &in_plane[src_y * g.w + src_x..src_y * g.w + src_x + n];
                    acc += go.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    if let Some(gin) = grad_in.as_deref_mut() {
                        let gi = &mut gin[i * hw + src_y * g.w + src_x..i * hw + src_y * g.w + src_x + n];
                        for (d, s) in gi.iter_mut().zip(go) {
                            *d += wv * s;
                        }
                    }
                }
                grad_w[wbase + tap] += acc;
            }
        }
    }
}

/// Zero-padded, stride-1 convolution with `filters` output channels.
#[derive(Clone, Debug)]
pub struct Conv2d {
    in_channels: usize,
    filters: usize,
    kernel: usize,
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new(in_channels: usize, filters: usize, kernel: usize, rng: &mut InitRng) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let kk = kernel * kernel;
        let weight = glorot_uniform(&[filters, in_channels, kernel, kernel], in_channels * kk, filters * kk, rng);
        Self::from_params(in_channels, filters, kernel, weight, Tensor::zeros(&[filters]))
    }

    pub fn from_params(in_channels: usize, filters: usize, kernel: usize, weight: Tensor, bias: Tensor) -> Self {
        Self {
            in_channels,
            filters,
            kernel,
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv2d {
            in_channels: self.in_channels,
            filters: self.filters,
            kernel: self.kernel,
        }
    }

    fn geometry(&self, x: &Tensor) -> Result<(usize, PlaneGeom)> {
        let (batch, chw) = x.split_trailing(3, "conv2d input")?;
        if chw[0] != self.in_channels {
            return Err(TensorError::ShapeMismatch {
                context: "conv2d input channels",
                expected: vec![self.in_channels],
                actual: vec![chw[0]],
            });
        }
        Ok((
            batch,
            PlaneGeom {
                c_in: self.in_channels,
                c_out: self.filters,
                h: chw[1],
                w: chw[2],
                k: self.kernel,
            },
        ))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    /// Forward pass without recording anything for backward.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let (batch, g) = self.geometry(x)?;
        let mut shape = x.shape().to_vec();
        let rank = shape.len();
        shape[rank - 3] = self.filters;
        let mut out = Tensor::zeros(&shape);
        let (in_sz, out_sz, hw) = (g.c_in * g.h * g.w, g.c_out * g.h * g.w, g.h * g.w);
        let bias = self.bias.value.data();
        for b in 0..batch {
            let dst = &mut out.data_mut()[b * out_sz..(b + 1) * out_sz];
            for (o, plane) in dst.chunks_mut(hw).enumerate() {
                plane.fill(bias[o]);
            }
            conv_plane_forward(g, &x.data()[b * in_sz..(b + 1) * in_sz], self.weight.value.data(), dst);
        }
        out.ensure_finite("conv2d forward")?;
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or(TensorError::BackwardBeforeForward("conv2d"))?;
        let (batch, g) = self.geometry(&x)?;
        let mut out_shape = x.shape().to_vec();
        let rank = out_shape.len();
        out_shape[rank - 3] = self.filters;
        grad_out.expect_shape("conv2d grad_out", &out_shape)?;
        let mut grad_in = Tensor::zeros(x.shape());
        let (in_sz, out_sz, hw) = (g.c_in * g.h * g.w, g.c_out * g.h * g.w, g.h * g.w);
        for b in 0..batch {
            let go = &grad_out.data()[b * out_sz..(b + 1) * out_sz];
            for (o, plane) in go.chunks(hw).enumerate() {
                self.bias.grad.data_mut()[o] += plane.iter().sum::<f64>();
            }
            conv_plane_backward(
                g,
                &x.data()[b * in_sz..(b + 1) * in_sz],
                self.weight.value.data(),
                go,
                Some(&mut grad_in.data_mut()[b * in_sz..(b + 1) * in_sz]),
                self.weight.grad.data_mut(),
            );
        }
        grad_in.ensure_finite("conv2d backward")?;
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
    fn table_conv1_shape() {
        let mut conv = Conv2d::new(1, 64, 3, &mut init_rng(0));
        // [T=2, C=1, 40, 40]
        let x = Tensor::full(&[2, 1, 40, 40], 0.3);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 64, 40, 40]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let conv = Conv2d::new(3, 4, 3, &mut init_rng(1));
        let y = conv.infer(&Tensor::zeros(&[2, 3, 5, 5])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_convolution_of_ones() {
        let conv = Conv2d::from_params(1, 1, 3, Tensor::full(&[1, 1, 3, 3], 1.0), Tensor::zeros(&[1]));
        let y = conv.infer(&Tensor::full(&[1, 1, 3, 3], 1.0)).unwrap();
        let d = y.data();
        assert_eq!(d[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(d[corner], 4.0);
        }
        for edge in [1, 3, 5, 7] {
            assert_eq!(d[edge], 6.0);
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let conv = Conv2d::new(2, 4, 3, &mut init_rng(1));
        assert!(matches!(
            conv.infer(&Tensor::zeros(&[1, 3, 4, 4])),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_requires_forward() {
        let mut conv = Conv2d::new(1, 1, 3, &mut init_rng(1));
        assert_eq!(
            conv.backward(&Tensor::zeros(&[1, 1, 2, 2])),
            Err(TensorError::BackwardBeforeForward("conv2d"))
        );
    }
}
