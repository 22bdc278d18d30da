//! Static layer descriptions: output shapes and operation counts.
//!
//! Shapes here are per sample. Image-like layers take `[T, C, H, W]` (frame
//! axis first); the fully connected layer takes any shape whose element count
//! equals its input dimension.

use std::ops::{Add, AddAssign};

use crate::error::{Result, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    /// Same (zero) padding, stride 1.
    Conv2d { in_channels: usize, filters: usize, kernel: usize },
    BatchNorm { channels: usize },
    /// Non-overlapping `window x window` mean.
    AvgPool { window: usize },
    ConvLstm { in_channels: usize, hidden: usize, kernel: usize },
    FullyConnected { in_dim: usize, units: usize, activation: Activation },
}

/// Operation and parameter counts for one forward inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub adds: u64,
    pub mults: u64,
    pub weights: u64,
    pub biases: u64,
}

impl OpCounts {
    /// Weights plus biases.
    pub fn params(&self) -> u64 {
        self.weights + self.biases
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            adds: self.adds + o.adds,
            mults: self.mults + o.mults,
            weights: self.weights + o.weights,
            biases: self.biases + o.biases,
        }
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: OpCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for OpCounts {
    fn sum<I: Iterator<Item = OpCounts>>(iter: I) -> Self {
        iter.fold(OpCounts::default(), Add::add)
    }
}

fn mismatch(context: &'static str, expected: Vec<usize>, actual: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        context,
        expected,
        actual: actual.to_vec(),
    }
}

fn chw(input: &[usize], channels: usize, context: &'static str) -> Result<(usize, usize, usize, usize)> {
    if input.len() < 3 || input[input.len() - 3] != channels {
        return Err(mismatch(context, vec![channels, 0, 0], input));
    }
    let r = input.len();
    let lead = input[..r - 3].iter().product();
    Ok((lead, input[r - 3], input[r - 2], input[r - 1]))
}

impl LayerSpec {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut out = input.to_vec();
        let r = input.len();
        match *self {
            LayerSpec::Conv2d { in_channels, filters, .. } => {
                chw(input, in_channels, "conv2d spec")?;
                out[r - 3] = filters;
            }
            LayerSpec::BatchNorm { channels } => {
                chw(input, channels, "batchnorm spec")?;
            }
            LayerSpec::AvgPool { window } => {
                if r < 2 || !input[r - 2].is_multiple_of(window) || !input[r - 1].is_multiple_of(window) {
                    return Err(TensorError::OddSpatialDim {
                        height: input.get(r.wrapping_sub(2)).copied().unwrap_or(0),
                        width: input.last().copied().unwrap_or(0),
                    });
                }
                out[r - 2] /= window;
                out[r - 1] /= window;
            }
            LayerSpec::ConvLstm { in_channels, hidden, .. } => {
                if r != 4 {
                    return Err(mismatch("convlstm spec [T, C, H, W]", vec![0, in_channels, 0, 0], input));
                }
                chw(input, in_channels, "convlstm spec")?;
                out[1] = hidden;
            }
            LayerSpec::FullyConnected { in_dim, units, .. } => {
                if input.iter().product::<usize>() != in_dim {
                    return Err(mismatch("fully connected spec", vec![in_dim], input));
                }
                out = vec![units];
            }
        }
        Ok(out)
    }

    /// Counts for one forward pass on `input`.
    ///
    /// Each multiply-accumulate contributes one multiplication and one
    /// addition, with the bias add standing in for the first accumulation's
    /// missing addition. Batch norm is counted in its folded inference form
    /// (one scale, one shift per element); pooling as three additions and one
    /// scaling per output. ConvLSTM counts its four gate convolutions over
    /// `[x_t, h_{t-1}]` plus three multiplications and one addition per cell
    /// element for the state update; activation functions are not counted.
    pub fn op_counts(&self, input: &[usize]) -> Result<OpCounts> {
        let out = self.output_shape(input)?;
        let out_elems: u64 = out.iter().product::<usize>() as u64;
        Ok(match *self {
            LayerSpec::Conv2d { in_channels, filters, kernel } => {
                let taps = (in_channels * kernel * kernel) as u64;
                OpCounts {
                    mults: out_elems * taps,
                    adds: out_elems * taps,
                    weights: filters as u64 * taps,
                    biases: filters as u64,
                }
            }
            LayerSpec::BatchNorm { channels } => OpCounts {
                mults: out_elems,
                adds: out_elems,
                weights: channels as u64,
                biases: channels as u64,
            },
            LayerSpec::AvgPool { window } => {
                let per = (window * window) as u64;
                OpCounts {
                    mults: out_elems,
                    adds: out_elems * (per - 1),
                    weights: 0,
                    biases: 0,
                }
            }
            LayerSpec::ConvLstm { in_channels, hidden, kernel } => {
                let taps = ((in_channels + hidden) * kernel * kernel) as u64;
                let gate_elems = 4 * out_elems;
                OpCounts {
                    mults: gate_elems * taps + 3 * out_elems,
                    adds: gate_elems * taps + out_elems,
                    weights: 4 * hidden as u64 * taps,
                    biases: 4 * hidden as u64,
                }
            }
            LayerSpec::FullyConnected { in_dim, units, .. } => {
                let macs = (in_dim * units) as u64;
                OpCounts {
                    mults: macs,
                    adds: macs,
                    weights: macs,
                    biases: units as u64,
                }
            }
        })
    }
}

/// Propagates `input_shape` through `stack`, summing per-layer counts.
pub fn count_ops(stack: &[LayerSpec], input_shape: &[usize]) -> Result<(OpCounts, Vec<usize>)> {
    let mut shape = input_shape.to_vec();
    let mut total = OpCounts::default();
    for layer in stack {
        total += layer.op_counts(&shape)?;
        shape = layer.output_shape(&shape)?;
    }
    Ok((total, shape))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera_stack(filters: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d { in_channels: 1, filters, kernel: 3 },
            LayerSpec::BatchNorm { channels: filters },
            LayerSpec::Conv2d { in_channels: filters, filters, kernel: 3 },
            LayerSpec::BatchNorm { channels: filters },
            LayerSpec::AvgPool { window: 2 },
            LayerSpec::ConvLstm { in_channels: filters, hidden: 1, kernel: 3 },
        ]
    }

    #[test]
    fn camera_stack_shape_law() {
        for n in [2, 4] {
            let (_, out) = count_ops(&camera_stack(64), &[n, 1, 40, 40]).unwrap();
            assert_eq!(out, vec![n, 1, 20, 20]);
        }
    }

    #[test]
    fn fc1_parameter_count() {
        let fc = LayerSpec::FullyConnected { in_dim: 2400, units: 96, activation: Activation::Relu };
        let c = fc.op_counts(&[2400]).unwrap();
        assert_eq!(c.params(), 230_496);
        assert_eq!(c.weights, 230_400);
        // 32-bit weights only: 921.6 kB
        assert_eq!(c.weights * 4, 921_600);
    }

    #[test]
    fn tiny_fc_counts() {
        let fc = LayerSpec::FullyConnected { in_dim: 2, units: 1, activation: Activation::Identity };
        let c = fc.op_counts(&[2]).unwrap();
        assert_eq!((c.mults, c.adds, c.params()), (2, 2, 3));
    }

    #[test]
    fn conv1_params() {
        let conv1 = LayerSpec::Conv2d { in_channels: 1, filters: 64, kernel: 3 };
        let c = conv1.op_counts(&[2, 1, 40, 40]).unwrap();
        assert_eq!(c.params(), 640);
        assert_eq!(c.mults, 2 * 64 * 40 * 40 * 9);
    }

    #[test]
    fn counts_split_invariance() {
        let stack = camera_stack(8);
        let (whole, _) = count_ops(&stack, &[4, 1, 40, 40]).unwrap();
        for cut in 0..=stack.len() {
            let (head, mid) = count_ops(&stack[..cut], &[4, 1, 40, 40]).unwrap();
            let (tail, _) = count_ops(&stack[cut..], &mid).unwrap();
            assert_eq!(head + tail, whole);
        }
    }
}
