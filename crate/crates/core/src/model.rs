//! Camera and BS network segments and the split training protocols.
//!
//! Each node owns its layers and its optimiser. A training step moves only
//! boundary tensors between nodes: camera activations up, their gradients
//! down.

use std::time::Instant;

use hetsl_tensor::{
    mse, Activation, Adam, AdamConfig, AvgPool2d, BatchNorm2d, Conv2d, ConvLstm, InitRng, Layer, Linear, Mode, Param,
    Sequential, Tensor, TensorError,
};

use crate::arch::ModelDims;
use crate::cost::CostLedger;
use crate::error::{CoreError, Result};
use crate::mixup::{aggregate, aggregate_backward, discard_map, FeatureActivation, FrameMap};
use crate::strategy::{Balance, CameraId, Protocol, StrategyConfig};

/// Affine map between dBm and network units; also applied to RSS inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerScaling {
    pub mean_dbm: f64,
    pub std_db: f64,
}

impl Default for PowerScaling {
    fn default() -> Self {
        Self { mean_dbm: 0.0, std_db: 1.0 }
    }
}

impl PowerScaling {
    pub fn fit(values_dbm: &[f64]) -> Result<Self> {
        if values_dbm.is_empty() {
            return Err(CoreError::Empty("power scaling fit"));
        }
        let n = values_dbm.len() as f64;
        let mean = values_dbm.iter().sum::<f64>() / n;
        let var = values_dbm.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-6 { var.sqrt() } else { 1.0 };
        Ok(Self { mean_dbm: mean, std_db: std })
    }

    pub fn normalize(&self, dbm: f64) -> f64 {
        (dbm - self.mean_dbm) / self.std_db
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        self.mean_dbm + self.std_db * z
    }
}

/// A mini-batch of look-back windows.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[N, c (n_rss - 1) + 1, 1, H, W]`.
    pub cam_a: Tensor,
    /// `[N, n_rss, 1, H, W]`.
    pub cam_b: Tensor,
    /// `[N, n_rss]` received powers in dBm, oldest first.
    pub rss_dbm: Tensor,
    pub labels_dbm: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels_dbm.is_empty()
    }
}

pub fn camera_net(dims: &ModelDims, rng: &mut InitRng) -> Sequential {
    let (f, k) = (dims.filters, dims.kernel);
    Sequential::new()
        .with("conv1", Layer::Conv2d(Conv2d::new(1, f, k, rng)))
        .with("norm1", Layer::BatchNorm(BatchNorm2d::new(f)))
        .with("conv2", Layer::Conv2d(Conv2d::new(f, f, k, rng)))
        .with("norm2", Layer::BatchNorm(BatchNorm2d::new(f)))
        .with("pool", Layer::AvgPool(AvgPool2d::new()))
        .with("recurrent1", Layer::ConvLstm(ConvLstm::new(f, 1, k, rng)))
}

fn params_of<'a>(nets: impl IntoIterator<Item = &'a mut Sequential>) -> Vec<&'a mut Param> {
    nets.into_iter().flat_map(|n| n.params_mut().into_iter().map(|(_, p)| p)).collect()
}

fn adam_for<'a>(config: AdamConfig, nets: impl IntoIterator<Item = &'a Sequential>) -> Adam {
    let params: Vec<&Param> = nets.into_iter().flat_map(|n| n.params().into_iter().map(|(_, p)| p)).collect();
    Adam::new(config, params)
}

/// Frame positions of a look-back window in units of `tau`, oldest first.
pub fn window_indices(cfg: &StrategyConfig, cam: CameraId) -> Vec<f64> {
    match cam {
        CameraId::A => (0..cfg.window_frames_a()).map(|j| j as f64 / cfg.c).collect(),
        CameraId::B => (0..cfg.window_frames_b()).map(|j| j as f64).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct CameraSegment {
    pub camera: CameraId,
    pub net: Sequential,
    pub optimizer: Adam,
    /// Camera-side frame balancing applied before conv1.
    input_map: Option<FrameMap>,
    indices: Vec<f64>,
}

impl CameraSegment {
    pub fn new(camera: CameraId, cfg: &StrategyConfig, dims: &ModelDims, adam: AdamConfig, rng: &mut InitRng) -> Result<Self> {
        Self::from_net(camera, cfg, camera_net(dims, rng), adam)
    }

    pub fn from_net(camera: CameraId, cfg: &StrategyConfig, net: Sequential, adam: AdamConfig) -> Result<Self> {
        let raw = window_indices(cfg, camera);
        let (input_map, indices) = match (cfg.balance, camera) {
            (Balance::Disc, CameraId::A) => {
                let map = discard_map(raw.len(), cfg.ratio())?;
                let kept = map.rows.iter().map(|r| raw[r.0]).collect();
                (Some(map), kept)
            }
            (Balance::MixInt, CameraId::B) => {
                let targets = window_indices(cfg, CameraId::A);
                (Some(FrameMap::interpolation(&raw, &targets)?), targets)
            }
            _ => (None, raw),
        };
        let optimizer = adam_for(adam, [&net]);
        Ok(Self { camera, net, optimizer, input_map, indices })
    }

    /// Frame indices of the uploaded activation.
    pub fn indices(&self) -> &[f64] {
        &self.indices
    }

    /// Applies frame balancing to the raw window `[N, T, 1, H, W]`.
    pub fn prepare(&self, raw: &Tensor) -> Result<Tensor> {
        match &self.input_map {
            Some(m) => m.apply(raw),
            None => Ok(raw.clone()),
        }
    }

    pub fn forward(&mut self, raw: &Tensor, mode: Mode) -> Result<FeatureActivation> {
        let x = self.prepare(raw)?;
        let a = self.net.forward(&x, mode)?;
        FeatureActivation::new(self.camera, self.indices.clone(), a)
    }

    /// Consumes the downloaded activation gradient.
    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        self.net.backward(grad)?;
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        Ok(self.optimizer.step(&mut params_of([&mut self.net]))?)
    }
}

#[derive(Clone, Debug)]
pub struct BsSegment {
    pub recurrent2: Sequential,
    pub head: Sequential,
    pub optimizer: Adam,
}

impl BsSegment {
    pub fn new(cfg: &StrategyConfig, dims: &ModelDims, adam: AdamConfig, rng: &mut InitRng) -> Self {
        let fp = dims.feature() * dims.feature();
        let recurrent2 = Sequential::new().with("recurrent2", Layer::ConvLstm(ConvLstm::new(1, 1, dims.kernel, rng)));
        let head = Sequential::new()
            .with(
                "fc1",
                Layer::Linear(Linear::new(fp * (cfg.bs_image_frames() + cfg.n_rss), dims.fc1_units, Activation::Relu, rng)),
            )
            .with("fc2", Layer::Linear(Linear::new(dims.fc1_units, 1, Activation::Identity, rng)));
        let optimizer = adam_for(adam, [&recurrent2, &head]);
        Self { recurrent2, head, optimizer }
    }

    pub fn step(&mut self) -> Result<()> {
        Ok(self.optimizer.step(&mut params_of([&mut self.recurrent2, &mut self.head]))?)
    }
}

/// What the BS needs to route gradients back to the cameras.
struct BsTrace {
    active: Vec<CameraId>,
    /// Aligned frame count per active camera.
    aligned: usize,
    image_frames: usize,
    b_map: Option<FrameMap>,
}

#[derive(Clone, Debug)]
pub struct SplitModel {
    pub cfg: StrategyConfig,
    pub dims: ModelDims,
    pub scaling: PowerScaling,
    /// Camera segments in use, camera A first. HetSLFedAvg keeps one
    /// replica per camera.
    pub cameras: Vec<CameraSegment>,
    pub bs: BsSegment,
    steps: u64,
}

fn node_rng(seed: u64, node: u64) -> InitRng {
    hetsl_tensor::init_rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(node))
}

impl SplitModel {
    pub fn new(cfg: StrategyConfig, dims: ModelDims, scaling: PowerScaling, adam: AdamConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if !dims.image.is_multiple_of(2) || dims.kernel.is_multiple_of(2) || dims.filters == 0 {
            return Err(CoreError::config("model dims", format!("{dims:?} needs an even image, odd kernel, filters > 0")));
        }
        let mut cameras = Vec::new();
        for cam in [CameraId::A, CameraId::B] {
            if !cfg.uses_camera(cam) {
                continue;
            }
            let seg = if cfg.protocol == Protocol::HetSLFedAvg && cam == CameraId::B {
                // Replicas start from identical weights.
                CameraSegment::from_net(cam, &cfg, cameras.first().map(|c: &CameraSegment| c.net.clone()).unwrap(), adam)?
            } else {
                CameraSegment::new(cam, &cfg, &dims, adam, &mut node_rng(seed, cam.index() as u64))?
            };
            cameras.push(seg);
        }
        let bs = BsSegment::new(&cfg, &dims, adam, &mut node_rng(seed, 2));
        Ok(Self { cfg, dims, scaling, cameras, bs, steps: 0 })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn camera(&self, cam: CameraId) -> Option<&CameraSegment> {
        self.cameras.iter().find(|c| c.camera == cam)
    }

    fn camera_mut(&mut self, cam: CameraId) -> Result<&mut CameraSegment> {
        self.cameras
            .iter_mut()
            .find(|c| c.camera == cam)
            .ok_or_else(|| CoreError::config("protocol", format!("camera {cam:?} is not part of {}", self.cfg.protocol)))
    }

    fn rss_maps(&self, batch: &Batch) -> Result<Tensor> {
        let n = batch.len();
        let f = self.dims.feature();
        batch.rss_dbm.expect_shape("rss window", &[n, self.cfg.n_rss])?;
        let mut data = Vec::with_capacity(n * self.cfg.n_rss * f * f);
        for &p in batch.rss_dbm.data() {
            data.extend(std::iter::repeat_n(self.scaling.normalize(p), f * f));
        }
        Ok(Tensor::new(vec![n, self.cfg.n_rss, 1, f, f], data)?)
    }

    fn raw_input(batch: &Batch, cam: CameraId) -> &Tensor {
        match cam {
            CameraId::A => &batch.cam_a,
            CameraId::B => &batch.cam_b,
        }
    }

    /// BS-side part of the forward pass on uploaded activations.
    fn bs_forward(&mut self, uploads: Vec<FeatureActivation>, batch: &Batch, mode: Mode) -> Result<(Tensor, BsTrace)> {
        let n = batch.len();
        let f = self.dims.feature();
        let fp = f * f;
        let targets = window_indices(&self.cfg, CameraId::A);
        let mut b_map = None;
        let mut aligned_acts = Vec::with_capacity(uploads.len());
        for act in uploads {
            if act.camera == CameraId::B && self.cfg.balance == Balance::MmixInt {
                let map = FrameMap::interpolation(&act.indices, &targets)?;
                aligned_acts.push(map.apply(&act.data)?);
                b_map = Some(map);
            } else {
                aligned_acts.push(act.data);
            }
        }
        let aligned = self.cfg.aligned_frames();
        let image = match aligned_acts.len() {
            0 => None,
            1 => aligned_acts.pop(),
            _ => Some(aggregate(&aligned_acts[0], &aligned_acts[1], &self.cfg)?),
        };
        let image_frames = image.as_ref().map_or(0, |t| t.shape()[1]);
        let rf = self.bs.recurrent2.forward(&self.rss_maps(batch)?, mode)?;
        let img_len = image_frames * fp;
        let rf_len = self.cfg.n_rss * fp;
        let mut z = Vec::with_capacity(n * (img_len + rf_len));
        for s in 0..n {
            if let Some(img) = &image {
                z.extend_from_slice(&img.data()[s * img_len..(s + 1) * img_len]);
            }
            z.extend_from_slice(&rf.data()[s * rf_len..(s + 1) * rf_len]);
        }
        let z = Tensor::new(vec![n, img_len + rf_len], z)?;
        let out = self.bs.head.forward(&z, mode)?;
        Ok((out, BsTrace { active: Vec::new(), aligned, image_frames, b_map }))
    }

    /// Forward pass with the given cameras active; returns the network
    /// output `[N, 1]` in normalised units.
    fn forward_with(&mut self, batch: &Batch, active: &[CameraId], mode: Mode) -> Result<(Tensor, BsTrace, Vec<FeatureActivation>)> {
        let mut uploads = Vec::with_capacity(active.len());
        for &cam in active {
            let raw = Self::raw_input(batch, cam);
            uploads.push(self.camera_mut(cam)?.forward(raw, mode)?);
        }
        let boundary = uploads.clone();
        let (out, mut trace) = self.bs_forward(uploads, batch, mode)?;
        trace.active = active.to_vec();
        Ok((out, trace, boundary))
    }

    fn backward_with(&mut self, grad_out: &Tensor, trace: BsTrace) -> Result<()> {
        let gz = self.bs.head.backward(grad_out)?;
        let n = grad_out.shape()[0];
        let f = self.dims.feature();
        let fp = f * f;
        let img_len = trace.image_frames * fp;
        let rf_len = self.cfg.n_rss * fp;
        let (mut g_img, mut g_rf) = (Vec::with_capacity(n * img_len), Vec::with_capacity(n * rf_len));
        for row in gz.data().chunks(img_len + rf_len) {
            g_img.extend_from_slice(&row[..img_len]);
            g_rf.extend_from_slice(&row[img_len..]);
        }
        self.bs.recurrent2.backward(&Tensor::new(vec![n, self.cfg.n_rss, 1, f, f], g_rf)?)?;
        if trace.active.is_empty() {
            return Ok(());
        }
        let g_img = Tensor::new(vec![n, trace.image_frames, 1, f, f], g_img)?;
        let grads = if trace.active.len() == 2 {
            let (ga, gb) = aggregate_backward(&g_img, trace.aligned, trace.aligned, &self.cfg)?;
            vec![ga, gb]
        } else {
            vec![g_img]
        };
        for (cam, g) in trace.active.iter().zip(grads) {
            let g = match (&trace.b_map, cam) {
                (Some(map), CameraId::B) => map.backward(&g)?,
                _ => g,
            };
            // Download to the camera.
            self.camera_mut(*cam)?.backward(&g)?;
        }
        Ok(())
    }

    fn default_active(&self) -> Vec<CameraId> {
        self.cameras.iter().map(|c| c.camera).collect()
    }

    fn zero_grad(&mut self) {
        for c in &mut self.cameras {
            c.net.zero_grad();
        }
        self.bs.recurrent2.zero_grad();
        self.bs.head.zero_grad();
    }

    /// Forward and backward with the given cameras, leaving gradients in
    /// the parameters. Returns the batch MSE in dB^2.
    pub fn forward_backward(&mut self, batch: &Batch, active: &[CameraId]) -> Result<f64> {
        if batch.is_empty() {
            return Err(CoreError::Empty("batch"));
        }
        self.zero_grad();
        let (out, trace, _) = self.forward_with(batch, active, Mode::Train)?;
        let s = self.scaling;
        let pred = out.map(|z| s.denormalize(z));
        let target = Tensor::new(vec![batch.len(), 1], batch.labels_dbm.clone())?;
        let (loss, grad) = mse(&pred, &target)?;
        if !loss.is_finite() {
            return Err(TensorError::NonFinite("training loss").into());
        }
        self.backward_with(&grad.map(|g| g * s.std_db), trace)?;
        Ok(loss)
    }

    fn apply_updates(&mut self, active: &[CameraId]) -> Result<()> {
        for &cam in active {
            self.camera_mut(cam)?.step()?;
        }
        self.bs.step()
    }

    /// Prediction and uploaded activations for `batch` (HetSLAgg-style,
    /// every camera in use contributes).
    pub fn forward_hetslagg(&mut self, batch: &Batch, mode: Mode) -> Result<(Vec<f64>, Vec<FeatureActivation>)> {
        let active = self.default_active();
        let (out, _, boundary) = self.forward_with(batch, &active, mode)?;
        let s = self.scaling;
        Ok((out.data().iter().map(|&z| s.denormalize(z)).collect(), boundary))
    }

    /// One four-phase exchange with every camera in use.
    pub fn train_step_hetslagg(&mut self, batch: &Batch, ledger: Option<&mut CostLedger>) -> Result<f64> {
        let start = Instant::now();
        let active = self.default_active();
        let loss = self.forward_backward(batch, &active)?;
        self.apply_updates(&active)?;
        self.steps += 1;
        if let Some(l) = ledger {
            let uploads = [active.contains(&CameraId::A), active.contains(&CameraId::B)];
            l.record_step(uploads, Some(start.elapsed().as_secs_f64()))?;
        }
        Ok(loss)
    }

    /// Camera scheduled for the next HetSLFedAvg step (strict round robin).
    pub fn fedavg_camera(&self) -> CameraId {
        if self.steps.is_multiple_of(2) {
            CameraId::A
        } else {
            CameraId::B
        }
    }

    /// One exchange with the scheduled camera; averages the replicas after
    /// every `fedavg_period` completed rounds.
    pub fn train_step_hetslfedavg(&mut self, batch: &Batch, ledger: Option<&mut CostLedger>) -> Result<f64> {
        if self.cfg.protocol != Protocol::HetSLFedAvg {
            return Err(CoreError::config("protocol", "federated averaging step on a non-FedAvg model"));
        }
        let start = Instant::now();
        let cam = self.fedavg_camera();
        let loss = self.forward_backward(batch, &[cam])?;
        self.apply_updates(&[cam])?;
        self.steps += 1;
        let rounds = self.steps / 2;
        if self.steps.is_multiple_of(2) && rounds.is_multiple_of(self.cfg.fedavg_period as u64) {
            self.average_replicas()?;
        }
        if let Some(l) = ledger {
            l.record_step([cam == CameraId::A, cam == CameraId::B], Some(start.elapsed().as_secs_f64()))?;
        }
        Ok(loss)
    }

    /// Replaces both camera replicas by their elementwise mean (weights and
    /// batch-norm statistics).
    pub fn average_replicas(&mut self) -> Result<()> {
        let [a, b] = self.cameras.as_mut_slice() else {
            return Err(CoreError::config("protocol", "averaging needs exactly two camera replicas"));
        };
        let pairs = a.net.params_mut().into_iter().zip(b.net.params_mut());
        for ((_, pa), (_, pb)) in pairs {
            average_pair(&mut pa.value, &mut pb.value)?;
        }
        for ((_, ta), (_, tb)) in a.net.buffers_mut().into_iter().zip(b.net.buffers_mut()) {
            average_pair(ta, tb)?;
        }
        Ok(())
    }

    pub fn train_step(&mut self, batch: &Batch, ledger: Option<&mut CostLedger>) -> Result<f64> {
        match self.cfg.protocol {
            Protocol::HetSLFedAvg => self.train_step_hetslfedavg(batch, ledger),
            _ => self.train_step_hetslagg(batch, ledger),
        }
    }

    /// Upload patterns `[U(A), U(B)]` a run cycles through.
    pub fn upload_patterns(&self) -> Vec<[bool; 2]> {
        match self.cfg.protocol {
            Protocol::HetSLFedAvg => vec![[true, false], [false, true]],
            _ => vec![[self.cfg.uses_camera(CameraId::A), self.cfg.uses_camera(CameraId::B)]],
        }
    }

    /// Eval-mode predictions in dBm. HetSLFedAvg averages the two
    /// single-camera predictions.
    pub fn predict(&mut self, batch: &Batch) -> Result<Vec<f64>> {
        let s = self.scaling;
        let paths: Vec<Vec<CameraId>> = match self.cfg.protocol {
            Protocol::HetSLFedAvg => vec![vec![CameraId::A], vec![CameraId::B]],
            _ => vec![self.default_active()],
        };
        let mut acc = vec![0.0; batch.len()];
        for path in &paths {
            let (out, _, _) = self.forward_with(batch, path, Mode::Eval)?;
            for (a, z) in acc.iter_mut().zip(out.data()) {
                *a += s.denormalize(*z);
            }
        }
        Ok(acc.into_iter().map(|v| v / paths.len() as f64).collect())
    }

    /// Every trainable parameter (with its gradient) under a node-qualified name.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for c in &self.cameras {
            let prefix = camera_prefix(c.camera);
            out.extend(c.net.params().into_iter().map(|(n, p)| (format!("{prefix}.{n}"), p)));
        }
        for net in [&self.bs.recurrent2, &self.bs.head] {
            out.extend(net.params().into_iter().map(|(n, p)| (format!("bs.{n}"), p)));
        }
        out
    }

    /// Every parameter and buffer under a stable node-qualified name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for c in &self.cameras {
            let prefix = camera_prefix(c.camera);
            out.extend(c.net.state().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        for net in [&self.bs.recurrent2, &self.bs.head] {
            out.extend(net.state().into_iter().map(|(n, t)| (format!("bs.{n}"), t)));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for c in &mut self.cameras {
            let prefix = camera_prefix(c.camera);
            out.extend(c.net.state_mut().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        for net in [&mut self.bs.recurrent2, &mut self.bs.head] {
            out.extend(net.state_mut().into_iter().map(|(n, t)| (format!("bs.{n}"), t)));
        }
        out
    }
}

fn camera_prefix(cam: CameraId) -> &'static str {
    match cam {
        CameraId::A => "cam_a",
        CameraId::B => "cam_b",
    }
}

fn average_pair(a: &mut Tensor, b: &mut Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch { context: "replica average", expected: a.shape().to_vec(), actual: b.shape().to_vec() }.into());
    }
    for (x, y) in a.data_mut().iter_mut().zip(b.data_mut()) {
        let m = 0.5 * (*x + *y);
        *x = m;
        *y = m;
    }
    Ok(())
}
