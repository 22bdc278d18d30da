//! Frame-axis interpolation, frame discarding and camera aggregation.
//!
//! Sequences are tensors `[N, T, ...]` with the frame axis second. Every
//! operation here is a fixed linear map over frames, so its backward pass is
//! the transposed map.

use hetsl_tensor::Tensor;

use crate::error::{CoreError, Result};
use crate::strategy::{Aggregate, CameraId, StrategyConfig};

/// Index coincidence tolerance for fractional frame positions.
const INDEX_EPS: f64 = 1e-9;

/// `lambda a + (1 - lambda) b`, clamped to the hull of `a` and `b`.
pub fn mix(a: f64, b: f64, lambda: f64) -> f64 {
    let v = lambda * a + (1.0 - lambda) * b;
    v.clamp(a.min(b), a.max(b))
}

/// Output frame `j` = `mix(in[lo], in[hi], lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMap {
    pub in_frames: usize,
    pub rows: Vec<(usize, usize, f64)>,
}

fn ordered(indices: &[f64], what: &'static str) -> Result<()> {
    if indices.is_empty() {
        return Err(CoreError::Empty(what));
    }
    if indices.iter().any(|k| !k.is_finite()) || indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CoreError::config(what, format!("indices {indices:?} must be finite and increasing")));
    }
    Ok(())
}

fn frame_dims(x: &Tensor, context: &'static str) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(hetsl_tensor::TensorError::ShapeMismatch { context, expected: vec![0, 0], actual: s.to_vec() }.into());
    }
    Ok((s[0], s[1], s[2..].iter().product()))
}

impl FrameMap {
    /// Piecewise-linear interpolation from frames at `available` to `targets`.
    ///
    /// A target coinciding with an available index copies that frame.
    pub fn interpolation(available: &[f64], targets: &[f64]) -> Result<Self> {
        ordered(available, "available frame indices")?;
        ordered(targets, "target frame indices")?;
        let mut rows = Vec::with_capacity(targets.len());
        for &k in targets {
            let unbracketed = || CoreError::Unbracketed { target: k, available: available.to_vec() };
            let lo = available.iter().rposition(|&u| u <= k + INDEX_EPS).ok_or_else(unbracketed)?;
            if (available[lo] - k).abs() <= INDEX_EPS {
                rows.push((lo, lo, 1.0));
                continue;
            }
            let hi = lo + 1;
            let upper = *available.get(hi).ok_or_else(unbracketed)?;
            rows.push((lo, hi, (upper - k) / (upper - available[lo])));
        }
        Ok(Self { in_frames: available.len(), rows })
    }

    pub fn select(in_frames: usize, keep: &[usize]) -> Self {
        Self { in_frames, rows: keep.iter().map(|&i| (i, i, 1.0)).collect() }
    }

    pub fn out_frames(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (n, t, inner) = frame_dims(x, "frame map input")?;
        if t != self.in_frames {
            return Err(CoreError::LengthMismatch { a: self.in_frames, b: t });
        }
        let mut shape = x.shape().to_vec();
        shape[1] = self.rows.len();
        let src = x.data();
        let mut out = Vec::with_capacity(n * self.rows.len() * inner);
        for b in 0..n {
            for &(lo, hi, lambda) in &self.rows {
                let a = &src[(b * t + lo) * inner..(b * t + lo + 1) * inner];
                if lo == hi || lambda == 1.0 {
                    out.extend_from_slice(a);
                } else {
                    let c = &src[(b * t + hi) * inner..(b * t + hi + 1) * inner];
                    out.extend(a.iter().zip(c).map(|(&p, &q)| mix(p, q, lambda)));
                }
            }
        }
        Ok(Tensor::new(shape, out)?)
    }

    /// Transposed map applied to an output gradient.
    pub fn backward(&self, grad: &Tensor) -> Result<Tensor> {
        let (n, t, inner) = frame_dims(grad, "frame map gradient")?;
        if t != self.rows.len() {
            return Err(CoreError::LengthMismatch { a: self.rows.len(), b: t });
        }
        let mut shape = grad.shape().to_vec();
        shape[1] = self.in_frames;
        let mut out = vec![0.0; n * self.in_frames * inner];
        let g = grad.data();
        for b in 0..n {
            for (j, &(lo, hi, lambda)) in self.rows.iter().enumerate() {
                let gj = &g[(b * t + j) * inner..(b * t + j + 1) * inner];
                for (dst, w) in [(lo, lambda), (hi, 1.0 - lambda)] {
                    if w == 0.0 {
                        continue;
                    }
                    let d = &mut out[(b * self.in_frames + dst) * inner..(b * self.in_frames + dst + 1) * inner];
                    for (o, v) in d.iter_mut().zip(gj) {
                        *o += w * v;
                    }
                }
            }
        }
        Ok(Tensor::new(shape, out)?)
    }
}

/// Camera-side activations with their (possibly fractional) frame indices.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureActivation {
    pub camera: CameraId,
    pub indices: Vec<f64>,
    /// `[N, T, ...]`.
    pub data: Tensor,
}

impl FeatureActivation {
    pub fn new(camera: CameraId, indices: Vec<f64>, data: Tensor) -> Result<Self> {
        ordered(&indices, "activation frame indices")?;
        let (_, t, _) = frame_dims(&data, "feature activation")?;
        if t != indices.len() {
            return Err(CoreError::LengthMismatch { a: indices.len(), b: t });
        }
        data.ensure_finite("feature activation")?;
        Ok(Self { camera, indices, data })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// BS-side interpolation of uploaded activations onto `targets`.
pub fn manifold_mixup_interpolate(seq: &FeatureActivation, targets: &[f64]) -> Result<FeatureActivation> {
    let map = FrameMap::interpolation(&seq.indices, targets)?;
    FeatureActivation::new(seq.camera, targets.to_vec(), map.apply(&seq.data)?)
}

/// Camera-side interpolation of raw images `[N, T, ...]` onto `targets`.
pub fn mixup_interpolate_images(images: &Tensor, indices: &[f64], targets: &[f64]) -> Result<Tensor> {
    FrameMap::interpolation(indices, targets)?.apply(images)
}

/// Keeps every `c`th frame of a rate-`c` sequence, i.e. the integer indices.
pub fn discard_map(frames: usize, c: usize) -> Result<FrameMap> {
    if c == 0 || frames == 0 || !(frames - 1).is_multiple_of(c) {
        return Err(CoreError::config("c", format!("{frames} frames do not span a whole number of rate-{c} steps")));
    }
    let keep: Vec<usize> = (0..frames).step_by(c).collect();
    Ok(FrameMap::select(frames, &keep))
}

pub fn discard_frames(seq: &Tensor, c: usize) -> Result<Tensor> {
    let (_, t, _) = frame_dims(seq, "discard input")?;
    discard_map(t, c)?.apply(seq)
}

/// Fuses two aligned camera activations `[N, T, ...]`.
pub fn aggregate(a: &Tensor, b: &Tensor, cfg: &StrategyConfig) -> Result<Tensor> {
    let (na, ta, ia) = frame_dims(a, "aggregate camera A")?;
    let (nb, tb, ib) = frame_dims(b, "aggregate camera B")?;
    if na != nb || ia != ib || a.shape()[2..] != b.shape()[2..] {
        return Err(hetsl_tensor::TensorError::ShapeMismatch {
            context: "aggregate inputs",
            expected: a.shape().to_vec(),
            actual: b.shape().to_vec(),
        }
        .into());
    }
    match cfg.aggregate {
        Aggregate::MmixAgg => {
            if ta != tb {
                return Err(CoreError::LengthMismatch { a: ta, b: tb });
            }
            let data = a.data().iter().zip(b.data()).map(|(&p, &q)| mix(p, q, cfg.lambda_agg)).collect();
            Ok(Tensor::new(a.shape().to_vec(), data)?)
        }
        Aggregate::ConcAgg => {
            let mut shape = a.shape().to_vec();
            shape[1] = ta + tb;
            let mut data = Vec::with_capacity(a.len() + b.len());
            for s in 0..na {
                data.extend_from_slice(&a.data()[s * ta * ia..(s + 1) * ta * ia]);
                data.extend_from_slice(&b.data()[s * tb * ib..(s + 1) * tb * ib]);
            }
            Ok(Tensor::new(shape, data)?)
        }
    }
}

/// Splits the aggregate's gradient back into per-camera gradients.
pub fn aggregate_backward(grad: &Tensor, frames_a: usize, frames_b: usize, cfg: &StrategyConfig) -> Result<(Tensor, Tensor)> {
    let (n, t, inner) = frame_dims(grad, "aggregate gradient")?;
    let mut sa = grad.shape().to_vec();
    let mut sb = sa.clone();
    sa[1] = frames_a;
    sb[1] = frames_b;
    match cfg.aggregate {
        Aggregate::MmixAgg => {
            if t != frames_a || t != frames_b {
                return Err(CoreError::LengthMismatch { a: frames_a, b: frames_b });
            }
            let l = cfg.lambda_agg;
            Ok((grad.map(|g| l * g), grad.map(|g| (1.0 - l) * g)))
        }
        Aggregate::ConcAgg => {
            if t != frames_a + frames_b {
                return Err(CoreError::LengthMismatch { a: frames_a + frames_b, b: t });
            }
            let (mut ga, mut gb) = (Vec::with_capacity(n * frames_a * inner), Vec::with_capacity(n * frames_b * inner));
            for s in 0..n {
                let row = &grad.data()[s * t * inner..(s + 1) * t * inner];
                ga.extend_from_slice(&row[..frames_a * inner]);
                gb.extend_from_slice(&row[frames_a * inner..]);
            }
            Ok((Tensor::new(sa, ga)?, Tensor::new(sb, gb)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: &[f64]) -> Tensor {
        // One sample, one value per frame, each frame 2x2.
        let data = values.iter().flat_map(|&v| [v; 4]).collect();
        Tensor::new(vec![1, values.len(), 1, 2, 2], data).unwrap()
    }

    #[test]
    fn integer_target_copies() {
        let x = Tensor::new(vec![1, 2, 3], vec![0.1, 0.7, 0.3, 0.9, 0.2, 0.4]).unwrap();
        let out = mixup_interpolate_images(&x, &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn third_step_weights() {
        let a = FeatureActivation::new(CameraId::B, vec![0.0, 1.0], seq(&[3.0, 6.0])).unwrap();
        let out = manifold_mixup_interpolate(&a, &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        let firsts: Vec<f64> = out.data.data().chunks(4).map(|c| c[0]).collect();
        assert_eq!(firsts[0], 3.0);
        assert!((firsts[1] - 4.0).abs() < 1e-12);
        assert!((firsts[2] - 5.0).abs() < 1e-12);
        assert_eq!(firsts[3], 6.0);
        let zero_one = FeatureActivation::new(CameraId::B, vec![0.0, 1.0], seq(&[0.0, 1.0])).unwrap();
        let two_thirds = manifold_mixup_interpolate(&zero_one, &[2.0 / 3.0]).unwrap();
        assert!(two_thirds.data.data().iter().all(|v| (v - 2.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn midpoint_of_constant_images() {
        let out = mixup_interpolate_images(&seq(&[10.0, 40.0]), &[0.0, 1.0], &[0.5]).unwrap();
        assert!(out.data().iter().all(|&v| v == 25.0));
    }

    #[test]
    fn unbracketed_target() {
        let a = FeatureActivation::new(CameraId::B, vec![0.0, 1.0], seq(&[0.0, 1.0])).unwrap();
        assert!(matches!(manifold_mixup_interpolate(&a, &[1.5]), Err(CoreError::Unbracketed { .. })));
        assert!(matches!(manifold_mixup_interpolate(&a, &[-0.5]), Err(CoreError::Unbracketed { .. })));
    }

    #[test]
    fn discard_keeps_integer_indices() {
        let x = seq(&[0.0, 1.0, 2.0, 3.0]);
        let out = discard_frames(&x, 3).unwrap();
        assert_eq!(out, seq(&[0.0, 3.0]));
        assert_eq!(discard_frames(&x, 1).unwrap(), x);
        assert!(discard_frames(&x, 2).is_err());
    }

    #[test]
    fn aggregation_modes() {
        let cfg = StrategyConfig { aggregate: Aggregate::MmixAgg, ..StrategyConfig::default() };
        let out = aggregate(&seq(&[0.0, 0.0]), &seq(&[2.0, 2.0]), &cfg).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));
        let conc = StrategyConfig { aggregate: Aggregate::ConcAgg, ..StrategyConfig::default() };
        let out = aggregate(&seq(&[1.0, 2.0, 3.0, 4.0]), &seq(&[5.0, 6.0, 7.0, 8.0]), &conc).unwrap();
        assert_eq!(out.shape()[1], 8);
        assert_eq!(out, seq(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        assert!(matches!(aggregate(&seq(&[0.0]), &seq(&[0.0, 1.0]), &cfg), Err(CoreError::LengthMismatch { .. })));
    }

    #[test]
    fn backward_is_transpose() {
        let map = FrameMap::interpolation(&[0.0, 1.0], &[0.0, 0.25, 1.0]).unwrap();
        let x = seq(&[0.3, -1.2]);
        let g = seq(&[1.0, 2.0, -0.5]);
        // <g, M x> == <M^T g, x>
        let lhs: f64 = map.apply(&x).unwrap().data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = map.backward(&g).unwrap().data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
