//! Monolithic reference evaluation of the two-camera network.
//!
//! Recomputes prediction and gradients in a single code path from cloned
//! layers, with frame balancing written out explicitly for c = 3 and a
//! two-sample look-back.

use std::collections::HashMap;

use hetsl_core::arch::ModelDims;
use hetsl_core::model::{Batch, SplitModel};
use hetsl_core::strategy::{Aggregate, Balance, CameraId, Protocol, StrategyConfig};
use hetsl_tensor::{Mode, Sequential, Tensor};
use rand::Rng;

pub fn small_dims() -> ModelDims {
    ModelDims { filters: 2, kernel: 3, image: 8, fc1_units: 5 }
}

pub fn random_strategy(rng: &mut impl Rng) -> StrategyConfig {
    StrategyConfig {
        protocol: Protocol::HetSLAgg,
        balance: Balance::ALL[rng.random_range(0..3)],
        aggregate: Aggregate::ALL[rng.random_range(0..2)],
        lambda_agg: rng.random_range(0.05..0.95),
        ..StrategyConfig::default()
    }
}

pub fn random_batch(rng: &mut impl Rng, n: usize, dims: &ModelDims) -> Batch {
    let img = dims.image;
    let mut frames = |t: usize| {
        let data = (0..n * t * img * img).map(|_| rng.random_range(0.0..1.0)).collect();
        Tensor::new(vec![n, t, 1, img, img], data).unwrap()
    };
    let cam_a = frames(4);
    let cam_b = frames(2);
    let rss = (0..2 * n).map(|_| rng.random_range(-44.0..-29.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(-44.0..-29.0)).collect();
    Batch { cam_a, cam_b, rss_dbm: Tensor::new(vec![n, 2], rss).unwrap(), labels_dbm: labels }
}

/// Frame `j` of `[N, T, ...]`.
fn frame(x: &Tensor, j: usize) -> Vec<Vec<f64>> {
    let (n, t) = (x.shape()[0], x.shape()[1]);
    let inner = x.len() / (n * t);
    (0..n).map(|s| x.data()[(s * t + j) * inner..(s * t + j + 1) * inner].to_vec()).collect()
}

fn stack(frames: &[Vec<Vec<f64>>], tail: &[usize]) -> Tensor {
    let n = frames[0].len();
    let mut data = Vec::new();
    for s in 0..n {
        for f in frames {
            data.extend_from_slice(&f[s]);
        }
    }
    let mut shape = vec![n, frames.len()];
    shape.extend_from_slice(tail);
    Tensor::new(shape, data).unwrap()
}

fn lerp(a: &[Vec<f64>], b: &[Vec<f64>], wa: f64) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| wa * p + (1.0 - wa) * q).collect()).collect()
}

fn add_scaled(acc: &mut [Vec<f64>], x: &[Vec<f64>], w: f64) {
    for (a, b) in acc.iter_mut().zip(x) {
        for (p, q) in a.iter_mut().zip(b) {
            *p += w * q;
        }
    }
}

/// Two endpoint frames to four at thirds.
fn thirds(x: &Tensor) -> Tensor {
    let (f0, f1) = (frame(x, 0), frame(x, 1));
    let tail = x.shape()[2..].to_vec();
    stack(&[f0.clone(), lerp(&f0, &f1, 2.0 / 3.0), lerp(&f0, &f1, 1.0 / 3.0), f1], &tail)
}

/// Transpose of [`thirds`].
fn thirds_t(g: &Tensor) -> Tensor {
    let fr: Vec<_> = (0..4).map(|j| frame(g, j)).collect();
    let mut g0 = fr[0].clone();
    add_scaled(&mut g0, &fr[1], 2.0 / 3.0);
    add_scaled(&mut g0, &fr[2], 1.0 / 3.0);
    let mut g1 = fr[3].clone();
    add_scaled(&mut g1, &fr[1], 1.0 / 3.0);
    add_scaled(&mut g1, &fr[2], 2.0 / 3.0);
    stack(&[g0, g1], &g.shape()[2..])
}

pub struct Reference {
    pub predictions: Vec<f64>,
    pub loss: f64,
    pub grads: HashMap<String, Tensor>,
}

fn grads_of(prefix: &str, net: &Sequential, out: &mut HashMap<String, Tensor>) {
    for (name, p) in net.params() {
        out.insert(format!("{prefix}.{name}"), p.grad.clone());
    }
}

/// Train-mode forward and backward of a HetSLAgg two-camera model.
pub fn monolithic(model: &SplitModel, batch: &Batch) -> Reference {
    let cfg = &model.cfg;
    let dims = model.dims;
    let f = dims.feature();
    let n = batch.len();
    let mut na = model.camera(CameraId::A).unwrap().net.clone();
    let mut nb = model.camera(CameraId::B).unwrap().net.clone();
    let mut rec = model.bs.recurrent2.clone();
    let mut head = model.bs.head.clone();
    for net in [&mut na, &mut nb, &mut rec, &mut head] {
        net.zero_grad();
    }
    let img_tail = [1, dims.image, dims.image];
    let xa = match cfg.balance {
        Balance::Disc => stack(&[frame(&batch.cam_a, 0), frame(&batch.cam_a, 3)], &img_tail),
        _ => batch.cam_a.clone(),
    };
    let xb = match cfg.balance {
        Balance::MixInt => thirds(&batch.cam_b),
        _ => batch.cam_b.clone(),
    };
    let ya = na.forward(&xa, Mode::Train).unwrap();
    let yb_raw = nb.forward(&xb, Mode::Train).unwrap();
    let yb = if cfg.balance == Balance::MmixInt { thirds(&yb_raw) } else { yb_raw };
    let t = ya.shape()[1];
    let feat_tail = [1, f, f];
    let agg = match cfg.aggregate {
        Aggregate::MmixAgg => {
            let fr: Vec<_> = (0..t).map(|j| lerp(&frame(&ya, j), &frame(&yb, j), cfg.lambda_agg)).collect();
            stack(&fr, &feat_tail)
        }
        Aggregate::ConcAgg => {
            let mut fr: Vec<_> = (0..t).map(|j| frame(&ya, j)).collect();
            fr.extend((0..t).map(|j| frame(&yb, j)));
            stack(&fr, &feat_tail)
        }
    };
    let s = model.scaling;
    let rss: Vec<f64> = batch
        .rss_dbm
        .data()
        .iter()
        .flat_map(|&p| std::iter::repeat_n((p - s.mean_dbm) / s.std_db, f * f))
        .collect();
    let rf = rec.forward(&Tensor::new(vec![n, 2, 1, f, f], rss).unwrap(), Mode::Train).unwrap();
    let (ia, ir) = (agg.len() / n, rf.len() / n);
    let mut z = Vec::new();
    for i in 0..n {
        z.extend_from_slice(&agg.data()[i * ia..(i + 1) * ia]);
        z.extend_from_slice(&rf.data()[i * ir..(i + 1) * ir]);
    }
    let out = head.forward(&Tensor::new(vec![n, ia + ir], z).unwrap(), Mode::Train).unwrap();
    let preds: Vec<f64> = out.data().iter().map(|&o| s.mean_dbm + s.std_db * o).collect();
    let err: Vec<f64> = preds.iter().zip(&batch.labels_dbm).map(|(p, y)| p - y).collect();
    let loss = err.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let g_out = Tensor::new(vec![n, 1], err.iter().map(|e| 2.0 * e / n as f64 * s.std_db).collect()).unwrap();
    let gz = head.backward(&g_out).unwrap();
    let (mut g_agg, mut g_rf) = (Vec::new(), Vec::new());
    for i in 0..n {
        let row = &gz.data()[i * (ia + ir)..(i + 1) * (ia + ir)];
        g_agg.extend_from_slice(&row[..ia]);
        g_rf.extend_from_slice(&row[ia..]);
    }
    rec.backward(&Tensor::new(vec![n, 2, 1, f, f], g_rf).unwrap()).unwrap();
    let g_agg = Tensor::new(agg.shape().to_vec(), g_agg).unwrap();
    let (ga, gb) = match cfg.aggregate {
        Aggregate::MmixAgg => (g_agg.map(|g| cfg.lambda_agg * g), g_agg.map(|g| (1.0 - cfg.lambda_agg) * g)),
        Aggregate::ConcAgg => {
            let ga: Vec<_> = (0..t).map(|j| frame(&g_agg, j)).collect();
            let gb: Vec<_> = (t..2 * t).map(|j| frame(&g_agg, j)).collect();
            (stack(&ga, &feat_tail), stack(&gb, &feat_tail))
        }
    };
    let gb = if cfg.balance == Balance::MmixInt { thirds_t(&gb) } else { gb };
    na.backward(&ga).unwrap();
    nb.backward(&gb).unwrap();
    let mut grads = HashMap::new();
    grads_of("cam_a", &na, &mut grads);
    grads_of("cam_b", &nb, &mut grads);
    grads_of("bs", &rec, &mut grads);
    grads_of("bs", &head, &mut grads);
    Reference { predictions: preds, loss, grads }
}

/// Largest absolute deviation between split and monolithic results.
pub fn split_vs_monolithic(model: &mut SplitModel, batch: &Batch) -> f64 {
    let reference = monolithic(model, batch);
    let mut fresh = model.clone();
    let (preds, _) = fresh.forward_hetslagg(batch, Mode::Train).unwrap();
    let mut worst = preds.iter().zip(&reference.predictions).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let loss = model.forward_backward(batch, &[CameraId::A, CameraId::B]).unwrap();
    worst = worst.max((loss - reference.loss).abs());
    for (name, p) in model.named_params() {
        let g = &reference.grads[&name];
        worst = worst.max(p.grad.max_abs_diff(g));
    }
    worst
}
