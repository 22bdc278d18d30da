//! Central finite-difference oracle for layer gradients.
//!
//! Only forward passes are used here; the result is compared against the
//! analytic gradients produced by `backward`. The scalar objective is a fixed
//! random projection `sum(r * f(x))` so every output element contributes.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::init::InitRng;
use crate::layer::Sequential;
use crate::tensor::Tensor;
use crate::Mode;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error so exactly-zero gradients do
/// not divide by zero.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub coordinates: usize,
}

impl GradCheck {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        self.max_rel_err = self.max_rel_err.max((analytic - numeric).abs() / denom);
        self.coordinates += 1;
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            coordinates: self.coordinates + other.coordinates,
        }
    }
}

fn objective(model: &Sequential, x: &Tensor, proj: &Tensor, mode: Mode) -> Result<f64> {
    let mut m = model.clone();
    let y = m.forward(x, mode)?;
    Ok(y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
}

fn coords(len: usize, max: usize, rng: &mut InitRng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        sample(rng, len, max).into_vec()
    }
}

/// Checks input and parameter gradients of `model` at `x`, probing at most
/// `max_coords` coordinates per tensor.
pub fn check_sequential(model: &Sequential, x: &Tensor, mode: Mode, max_coords: usize, rng: &mut InitRng) -> Result<GradCheck> {
    let mut analytic = model.clone();
    analytic.zero_grad();
    let y = analytic.forward(x, mode)?;
    let proj = Tensor::new(
        y.shape().to_vec(),
        (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let grad_x = analytic.backward(&proj)?;

    let mut report = GradCheck::default();
    for i in coords(x.len(), max_coords, rng) {
        let mut plus = x.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= FD_STEP;
        let numeric = (objective(model, &plus, &proj, mode)? - objective(model, &minus, &proj, mode)?) / (2.0 * FD_STEP);
        report.record(grad_x.data()[i], numeric);
    }

    let grads: Vec<Tensor> = analytic.params().into_iter().map(|(_, p)| p.grad.clone()).collect();
    for (pi, grad) in grads.iter().enumerate() {
        for i in coords(grad.len(), max_coords, rng) {
            let eval = |delta: f64| -> Result<f64> {
                let mut m = model.clone();
                let mut params = m.params_mut();
                params[pi].1.value.data_mut()[i] += delta;
                drop(params);
                objective(&m, x, &proj, mode)
            };
            let numeric = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
            report.record(grad.data()[i], numeric);
        }
    }
    Ok(report)
}
