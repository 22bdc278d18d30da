//! Convolutional LSTM over `[N, T, C, H, W]` sequences.
//!
//! Gate pre-activations are `W_x * x_t + W_h * h_{t-1} + b` with same-padded
//! convolutions; the gates are ordered input, forget, candidate, output:
//!
//! ```text
//! i = sigmoid(.)  f = sigmoid(.)  g = tanh(.)  o = sigmoid(.)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! Hidden and cell states start at zero for every sequence. The layer returns
//! the whole hidden-state sequence.

use crate::conv::{conv_plane_backward, conv_plane_forward, PlaneGeom};
use crate::error::{Result, TensorError};
use crate::init::{glorot_uniform, InitRng};
use crate::param::Param;
use crate::spec::LayerSpec;
use crate::tensor::Tensor;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations kept for backpropagation through time, laid out
/// `[N, T, hidden, H, W]` (gates: `[N, T, 4 * hidden, H, W]`).
#[derive(Clone, Debug)]
struct LstmCache {
    input: Tensor,
    gates: Vec<f64>,
    cells: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvLstm {
    in_channels: usize,
    hidden: usize,
    kernel: usize,
    pub w_x: Param,
    pub w_h: Param,
    pub bias: Param,
    cache: Option<LstmCache>,
}

impl ConvLstm {
    pub fn new(in_channels: usize, hidden: usize, kernel: usize, rng: &mut InitRng) -> Self {
        let kk = kernel * kernel;
        let fan_in = (in_channels + hidden) * kk;
        let fan_out = 4 * hidden * kk;
        let w_x = glorot_uniform(&[4 * hidden, in_channels, kernel, kernel], fan_in, fan_out, rng);
        let w_h = glorot_uniform(&[4 * hidden, hidden, kernel, kernel], fan_in, fan_out, rng);
        Self::from_params(in_channels, hidden, kernel, w_x, w_h, Tensor::zeros(&[4 * hidden]))
    }

    pub fn from_params(in_channels: usize, hidden: usize, kernel: usize, w_x: Tensor, w_h: Tensor, bias: Tensor) -> Self {
        Self {
            in_channels,
            hidden,
            kernel,
            w_x: Param::new(w_x),
            w_h: Param::new(w_h),
            bias: Param::new(bias),
            cache: None,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::ConvLstm {
            in_channels: self.in_channels,
            hidden: self.hidden,
            kernel: self.kernel,
        }
    }

    fn dims(&self, x: &Tensor) -> Result<[usize; 5]> {
        let s = x.shape();
        if s.len() != 5 || s[2] != self.in_channels {
            return Err(TensorError::ShapeMismatch {
                context: "convlstm input [N, T, C, H, W]",
                expected: vec![0, 0, self.in_channels, 0, 0],
                actual: s.to_vec(),
            });
        }
        Ok([s[0], s[1], s[2], s[3], s[4]])
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let [n, t, c, h, w] = self.dims(x)?;
        let hc = self.hidden;
        let hw = h * w;
        let gx = PlaneGeom { c_in: c, c_out: 4 * hc, h, w, k: self.kernel };
        let gh = PlaneGeom { c_in: hc, c_out: 4 * hc, h, w, k: self.kernel };
        let state = hc * hw;
        let mut gates = vec![0.0; n * t * 4 * state];
        let mut cells = vec![0.0; n * t * state];
        let mut hidden = vec![0.0; n * t * state];
        let zeros = vec![0.0; state];
        let bias = self.bias.value.data();
        for s in 0..n {
            for step in 0..t {
                let idx = s * t + step;
                let pre = &mut gates[idx * 4 * state..(idx + 1) * 4 * state];
                for (g, plane) in pre.chunks_mut(hw).enumerate() {
                    plane.fill(bias[g]);
                }
                let xt = &x.data()[idx * c * hw..(idx + 1) * c * hw];
                conv_plane_forward(gx, xt, self.w_x.value.data(), pre);
                let (h_prev, c_prev) = if step == 0 {
                    (&zeros[..], &zeros[..])
                } else {
                    (&hidden[(idx - 1) * state..idx * state], &cells[(idx - 1) * state..idx * state])
                };
                conv_plane_forward(gh, h_prev, self.w_h.value.data(), pre);
                if pre.iter().any(|v| !v.is_finite()) {
                    return Err(TensorError::NonFinite("convlstm gates"));
                }
                let c_prev = c_prev.to_vec();
                for j in 0..state {
                    let i_g = sigmoid(pre[j]);
                    let f_g = sigmoid(pre[state + j]);
                    let g_g = pre[2 * state + j].tanh();
                    let o_g = sigmoid(pre[3 * state + j]);
                    pre[j] = i_g;
                    pre[state + j] = f_g;
                    pre[2 * state + j] = g_g;
                    pre[3 * state + j] = o_g;
                    let c_t = f_g * c_prev[j] + i_g * g_g;
                    cells[idx * state + j] = c_t;
                    hidden[idx * state + j] = o_g * c_t.tanh();
                }
            }
        }
        let out = Tensor::new(vec![n, t, hc, h, w], hidden.clone())?;
        out.ensure_finite("convlstm forward")?;
        self.cache = Some(LstmCache {
            input: x.clone(),
            gates,
            cells,
            hidden,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(TensorError::BackwardBeforeForward("convlstm"))?;
        let x = &cache.input;
        let [n, t, c, h, w] = self.dims(x)?;
        let hc = self.hidden;
        grad_out.expect_shape("convlstm grad_out", &[n, t, hc, h, w])?;
        let hw = h * w;
        let state = hc * hw;
        let gx = PlaneGeom { c_in: c, c_out: 4 * hc, h, w, k: self.kernel };
        let gh = PlaneGeom { c_in: hc, c_out: 4 * hc, h, w, k: self.kernel };
        let mut grad_in = Tensor::zeros(x.shape());
        let mut d_pre = vec![0.0; 4 * state];
        let zeros = vec![0.0; state];
        for s in 0..n {
            let mut dh_next = vec![0.0; state];
            let mut dc_next = vec![0.0; state];
            for step in (0..t).rev() {
                let idx = s * t + step;
                let gates = &cache.gates[idx * 4 * state..(idx + 1) * 4 * state];
                let c_t = &cache.cells[idx * state..(idx + 1) * state];
                let (h_prev, c_prev) = if step == 0 {
                    (&zeros[..], &zeros[..])
                } else {
                    (
                        &cache.hidden[(idx - 1) * state..idx * state],
                        &cache.cells[(idx - 1) * state..idx * state],
                    )
                };
                let go = &grad_out.data()[idx * state..(idx + 1) * state];
                for j in 0..state {
                    let (i_g, f_g, g_g, o_g) = (gates[j], gates[state + j], gates[2 * state + j], gates[3 * state + j]);
                    let tc = c_t[j].tanh();
                    let dh = go[j] + dh_next[j];
                    let d_o = dh * tc;
                    let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
                    d_pre[j] = dc * g_g * i_g * (1.0 - i_g);
                    d_pre[state + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                    d_pre[2 * state + j] = dc * i_g * (1.0 - g_g * g_g);
                    d_pre[3 * state + j] = d_o * o_g * (1.0 - o_g);
                    dc_next[j] = dc * f_g;
                }
                for (g, plane) in d_pre.chunks(hw).enumerate() {
                    self.bias.grad.data_mut()[g] += plane.iter().sum::<f64>();
                }
                let xt = &x.data()[idx * c * hw..(idx + 1) * c * hw];
                let gin = &mut grad_in.data_mut()[idx * c * hw..(idx + 1) * c * hw];
                conv_plane_backward(gx, xt, self.w_x.value.data(), &d_pre, Some(gin), self.w_x.grad.data_mut());
                dh_next.fill(0.0);
                conv_plane_backward(gh, h_prev, self.w_h.value.data(), &d_pre, Some(&mut dh_next), self.w_h.grad.data_mut());
            }
        }
        grad_in.ensure_finite("convlstm backward")?;
        Ok(grad_in)
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![("w_x", &mut self.w_x), ("w_h", &mut self.w_h), ("bias", &mut self.bias)]
    }

    pub fn params(&self) -> Vec<(&'static str, &Param)> {
        vec![("w_x", &self.w_x), ("w_h", &self.w_h), ("bias", &self.bias)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::init_rng;

    #[test]
    fn table_recurrent1_shape() {
        let mut lstm = ConvLstm::new(64, 1, 3, &mut init_rng(3));
        let y = lstm.forward(&Tensor::full(&[1, 4, 64, 20, 20], 0.01)).unwrap();
        assert_eq!(y.shape(), &[1, 4, 1, 20, 20]);
    }

    #[test]
    fn zero_everything_stays_zero() {
        let mut lstm = ConvLstm::from_params(
            2,
            1,
            3,
            Tensor::zeros(&[4, 2, 3, 3]),
            Tensor::zeros(&[4, 1, 3, 3]),
            Tensor::zeros(&[4]),
        );
        let y = lstm.forward(&Tensor::zeros(&[2, 3, 2, 4, 4])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_step_matches_hand_evaluation() {
        // 1x1 spatial: only the centre tap of each 3x3 kernel touches data.
        let mut w_x = Tensor::zeros(&[4, 1, 3, 3]);
        let centre = [0.5, -0.3, 0.8, 0.2];
        for (g, v) in centre.iter().enumerate() {
            w_x.data_mut()[g * 9 + 4] = *v;
        }
        let bias = Tensor::new(vec![4], vec![0.1, 0.2, -0.1, 0.05]).unwrap();
        let mut lstm = ConvLstm::from_params(1, 1, 3, w_x, Tensor::zeros(&[4, 1, 3, 3]), bias);
        let x = 0.7;
        let y = lstm.forward(&Tensor::full(&[1, 1, 1, 1, 1], x)).unwrap();
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.1);
        let g = (0.8f64 * x - 0.1).tanh();
        let o = s(0.2 * x + 0.05);
        let c = i * g; // forget gate multiplies a zero cell state
        let expected = o * c.tanh();
        assert!((y.data()[0] - expected).abs() < 1e-15);
    }
}
