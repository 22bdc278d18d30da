//! mmWave link rates.
//!
//! The camera-A link is blocked by the pedestrian, so its rate follows a
//! per-interval attenuation staircase `A(t)`; the camera-B link is static
//! and its LoS power comes from the power-distance law.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CoreError, Result};

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Shannon rate `W log2(1 + snr)`.
pub fn shannon_rate(bandwidth_hz: f64, snr_linear: f64) -> f64 {
    bandwidth_hz * (1.0 + snr_linear).log2()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkParams {
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    /// Measured LoS received power on the camera-A link.
    pub los_power_dbm: f64,
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub path_loss_exponent: f64,
    /// Path loss at the reference distance.
    pub ref_path_loss_db: f64,
    pub ref_distance_m: f64,
    /// Camera-B to BS distance.
    pub distance_m: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1.76e9,
            noise_dbm: -60.0,
            los_power_dbm: -29.0,
            tx_power_dbm: 10.0,
            tx_gain_dbi: 8.0,
            rx_gain_dbi: 24.0,
            path_loss_exponent: 1.6,
            ref_path_loss_db: 68.0,
            ref_distance_m: 1.0,
            // Puts the static link at ~19.1 Gbit/s.
            distance_m: 1.2,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(CoreError::config("bandwidth_hz", "must be positive"));
        }
        if !(self.distance_m > 0.0) || !(self.ref_distance_m > 0.0) {
            return Err(CoreError::config("distance_m", "distances must be positive"));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(CoreError::config("path_loss_exponent", "must be positive"));
        }
        Ok(())
    }

    /// LoS received power of the static link from the power-distance law.
    pub fn path_loss_power_dbm(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.tx_power_dbm + self.tx_gain_dbi + self.rx_gain_dbi
            - self.ref_path_loss_db
            - 10.0 * self.path_loss_exponent * (self.distance_m / self.ref_distance_m).log10())
    }

    /// Distance at which the static link reaches `rate_bps`.
    pub fn distance_for_rate(&self, rate_bps: f64) -> f64 {
        let snr = 2f64.powf(rate_bps / self.bandwidth_hz) - 1.0;
        let p_l = 10.0 * snr.log10() + self.noise_dbm;
        let budget = self.tx_power_dbm + self.tx_gain_dbi + self.rx_gain_dbi - self.ref_path_loss_db - p_l;
        self.ref_distance_m * 10f64.powf(budget / (10.0 * self.path_loss_exponent))
    }
}

/// Attenuation staircase: `A(t) = samples[k]` for `t` in `[k tau, (k+1) tau)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelTrace {
    pub tau_s: f64,
    samples: Vec<f64>,
}

impl ChannelTrace {
    pub fn new(tau_s: f64, samples: Vec<f64>) -> Result<Self> {
        if !(tau_s > 0.0) {
            return Err(CoreError::config("tau_s", "must be positive"));
        }
        if samples.is_empty() {
            return Err(CoreError::Empty("channel trace"));
        }
        if let Some(bad) = samples.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(CoreError::config("attenuation", format!("{bad} not in (0, 1]")));
        }
        Ok(Self { tau_s, samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 * self.tau_s
    }

    pub fn attenuation_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t >= self.duration_s() {
            return Err(CoreError::TimeOutOfRange {
                t,
                end: self.duration_s(),
            });
        }
        let k = ((t / self.tau_s).floor() as usize).min(self.samples.len() - 1);
        Ok(self.samples[k])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,attenuation_linear\n");
        for (k, a) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{k},{a}");
        }
        out
    }

    pub fn from_csv(tau_s: f64, text: &str) -> Result<Self> {
        let bad = |reason: String| CoreError::MalformedHeader {
            path: "<channel csv>".into(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("k,attenuation_linear") {
            return Err(bad("expected header `k,attenuation_linear`".into()));
        }
        let mut samples = Vec::new();
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let (k, a) = line.split_once(',').ok_or_else(|| bad(format!("row {row}: `{line}`")))?;
            if k.trim().parse::<usize>().ok() != Some(row) {
                return Err(bad(format!("row {row}: index `{k}` out of order")));
            }
            samples.push(a.trim().parse::<f64>().map_err(|e| bad(format!("row {row}: {e}")))?);
        }
        Self::new(tau_s, samples)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| CoreError::io(path, e))
    }
}

/// Rate of the time-varying camera-A link at time `t`.
pub fn rate_cam_a(t: f64, params: &LinkParams, trace: &ChannelTrace) -> Result<f64> {
    params.validate()?;
    let a = trace.attenuation_at(t)?;
    Ok(shannon_rate(
        params.bandwidth_hz,
        a * dbm_to_mw(params.los_power_dbm) / dbm_to_mw(params.noise_dbm),
    ))
}

/// Rate of the static camera-B link.
pub fn rate_cam_b(params: &LinkParams) -> Result<f64> {
    let p_l = params.path_loss_power_dbm()?;
    Ok(shannon_rate(params.bandwidth_hz, dbm_to_mw(p_l) / dbm_to_mw(params.noise_dbm)))
}

/// A blocked (NLoS) time span `[start, end)` in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockageInterval {
    pub start_s: f64,
    pub end_s: f64,
}

/// Builds a `K + 1` sample attenuation staircase from a blockage schedule.
///
/// Sample `k` is NLoS when `k tau` falls inside a blocked interval; the
/// `ramp_samples` LoS samples on either side of an NLoS run step linearly (in
/// dB) towards the full depth.
pub fn synth_attenuation_trace(
    schedule: &[BlockageInterval],
    depth_db: f64,
    k_max: usize,
    tau_s: f64,
    ramp_samples: usize,
) -> Result<ChannelTrace> {
    let mut sorted = schedule.to_vec();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for iv in &sorted {
        if !(iv.end_s > iv.start_s) {
            return Err(CoreError::config("blockage interval", format!("[{}, {}) is empty", iv.start_s, iv.end_s)));
        }
    }
    for w in sorted.windows(2) {
        if w[1].start_s < w[0].end_s {
            return Err(CoreError::OverlappingIntervals(w[0].start_s, w[0].end_s, w[1].start_s, w[1].end_s));
        }
    }
    let n = k_max + 1;
    let blocked: Vec<bool> = (0..n)
        .map(|k| {
            let t = k as f64 * tau_s;
            sorted.iter().any(|iv| t >= iv.start_s && t < iv.end_s)
        })
        .collect();
    let atten_db: Vec<f64> = (0..n)
        .map(|k| {
            if blocked[k] {
                return depth_db;
            }
            let nearest = (1..=ramp_samples).find(|&d| {
                (k >= d && blocked[k - d]) || (k + d < n && blocked[k + d])
            });
            match nearest {
                Some(d) => depth_db * (1.0 - d as f64 / (ramp_samples + 1) as f64),
                None => 0.0,
            }
        })
        .collect();
    ChannelTrace::new(tau_s, atten_db.iter().map(|db| db_to_linear(-db)).collect())
}
