//! Layer stacks of the split network and per-node operation counts.

use hetsl_tensor::{count_ops, Activation, LayerSpec, OpCounts};

use crate::error::Result;
use crate::strategy::{Aggregate, Balance, CameraId, Protocol, StrategyConfig};

/// Width and kernel of the layer stacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub filters: usize,
    pub kernel: usize,
    /// Side of the square depth image fed to conv1.
    pub image: usize,
    pub fc1_units: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            filters: 64,
            kernel: 3,
            image: 40,
            fc1_units: 96,
        }
    }
}

impl ModelDims {
    pub fn feature(&self) -> usize {
        self.image / 2
    }
}

/// conv1, norm1, conv2, norm2, pool, recurrent1.
pub fn camera_specs(d: &ModelDims) -> Vec<LayerSpec> {
    let f = d.filters;
    vec![
        LayerSpec::Conv2d { in_channels: 1, filters: f, kernel: d.kernel },
        LayerSpec::BatchNorm { channels: f },
        LayerSpec::Conv2d { in_channels: f, filters: f, kernel: d.kernel },
        LayerSpec::BatchNorm { channels: f },
        LayerSpec::AvgPool { window: 2 },
        LayerSpec::ConvLstm { in_channels: f, hidden: 1, kernel: d.kernel },
    ]
}

pub fn rss_spec(d: &ModelDims) -> LayerSpec {
    LayerSpec::ConvLstm { in_channels: 1, hidden: 1, kernel: d.kernel }
}

/// fc1 (ReLU) and fc2.
pub fn head_specs(cfg: &StrategyConfig, d: &ModelDims) -> Vec<LayerSpec> {
    let fp = d.feature() * d.feature();
    vec![
        LayerSpec::FullyConnected {
            in_dim: fp * (cfg.bs_image_frames() + cfg.n_rss),
            units: d.fc1_units,
            activation: Activation::Relu,
        },
        LayerSpec::FullyConnected { in_dim: d.fc1_units, units: 1, activation: Activation::Identity },
    ]
}

pub fn fc1_weights(cfg: &StrategyConfig, d: &ModelDims) -> u64 {
    match head_specs(cfg, d)[0] {
        LayerSpec::FullyConnected { in_dim, units, .. } => (in_dim * units) as u64,
        _ => unreachable!(),
    }
}

/// Two multiplications and one addition per mixed element.
fn mix_ops(elements: usize) -> OpCounts {
    OpCounts {
        adds: elements as u64,
        mults: 2 * elements as u64,
        weights: 0,
        biases: 0,
    }
}

/// Forward-inference counts for camera A, camera B and the BS.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NodeOps {
    pub cam_a: OpCounts,
    pub cam_b: OpCounts,
    pub bs: OpCounts,
}

impl NodeOps {
    pub fn camera(&self, cam: CameraId) -> OpCounts {
        match cam {
            CameraId::A => self.cam_a,
            CameraId::B => self.cam_b,
        }
    }
}

pub fn node_ops(cfg: &StrategyConfig, d: &ModelDims) -> Result<NodeOps> {
    let image_px = d.image * d.image;
    let feature_px = d.feature() * d.feature();
    let fine = cfg.window_frames_a();
    let coarse = cfg.window_frames_b();
    let mut out = NodeOps::default();
    for cam in [CameraId::A, CameraId::B] {
        if !cfg.uses_camera(cam) {
            continue;
        }
        let frames = cfg.camera_frames(cam);
        let (mut ops, _) = count_ops(&camera_specs(d), &[frames, 1, d.image, d.image])?;
        if cam == CameraId::B && cfg.balance == Balance::MixInt {
            ops += mix_ops((fine - coarse) * image_px);
        }
        match cam {
            CameraId::A => out.cam_a = ops,
            CameraId::B => out.cam_b = ops,
        }
    }
    let (mut bs, _) = count_ops(&[rss_spec(d)], &[cfg.n_rss, 1, d.feature(), d.feature()])?;
    if cfg.balance == Balance::MmixInt && cfg.uses_camera(CameraId::B) {
        bs += mix_ops((fine - coarse) * feature_px);
    }
    if cfg.protocol == Protocol::HetSLAgg && cfg.aggregate == Aggregate::MmixAgg {
        bs += mix_ops(cfg.aligned_frames() * feature_px);
    }
    bs += count_ops(&head_specs(cfg, d), &[feature_px * (cfg.bs_image_frames() + cfg.n_rss)])?.0;
    out.bs = bs;
    Ok(out)
}
