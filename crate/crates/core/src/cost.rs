//! Payload sizes, exchange latencies, training-time curve and NN power.

use std::fmt::Write as _;

use hetsl_tensor::OpCounts;

use crate::arch::{fc1_weights, ModelDims, NodeOps};
use crate::channel::{rate_cam_a, rate_cam_b, ChannelTrace, LinkParams};
use crate::error::{CoreError, Result};
use crate::strategy::{Balance, CameraId, Protocol, StrategyConfig};

pub const BITS_PER_ELEMENT: u64 = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PayloadMode {
    /// Sizes derived from tensor dimensions.
    #[default]
    Computed,
    /// Published constants for the MixInt/MmixInt rows.
    Published,
}

impl std::str::FromStr for PayloadMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "computed" => Ok(PayloadMode::Computed),
            "published" => Ok(PayloadMode::Published),
            other => Err(CoreError::config("payload_mode", format!("`{other}` is not computed or published"))),
        }
    }
}

impl std::fmt::Display for PayloadMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PayloadMode::Computed => "computed",
            PayloadMode::Published => "published",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PayloadSpec {
    pub bits_per_element: u64,
    /// Uplink bytes per exchange, indexed by camera.
    pub fp_bytes: [u64; 2],
    pub bp_bytes: u64,
    /// `U(A)`, `U(B)`.
    pub uploads: [bool; 2],
}

impl PayloadSpec {
    pub fn with_uploads(self, uploads: [bool; 2]) -> Self {
        Self { uploads, ..self }
    }

    pub fn uplink_bytes(&self, cam: CameraId) -> u64 {
        if self.uploads[cam.index()] {
            self.fp_bytes[cam.index()]
        } else {
            0
        }
    }

    /// Downlink bytes, one fc1-gradient copy per active camera.
    pub fn downlink_bytes(&self) -> u64 {
        self.uploads.iter().filter(|u| **u).count() as u64 * self.bp_bytes
    }
}

pub fn payloads(cfg: &StrategyConfig, dims: &ModelDims, mode: PayloadMode) -> PayloadSpec {
    let bytes = |elements: u64| BITS_PER_ELEMENT * elements / 8;
    let feature_px = (dims.feature() * dims.feature()) as u64;
    let fp = |cam: CameraId| {
        if cfg.uses_camera(cam) {
            bytes(feature_px * cfg.camera_frames(cam) as u64)
        } else {
            0
        }
    };
    let mut spec = PayloadSpec {
        bits_per_element: BITS_PER_ELEMENT,
        fp_bytes: [fp(CameraId::A), fp(CameraId::B)],
        bp_bytes: bytes(fc1_weights(cfg, dims)),
        uploads: [cfg.uses_camera(CameraId::A), cfg.uses_camera(CameraId::B)],
    };
    if mode == PayloadMode::Published && cfg.protocol == Protocol::HetSLAgg {
        if cfg.balance != Balance::Disc {
            spec.bp_bytes = match cfg.aggregate {
                crate::strategy::Aggregate::ConcAgg => 1_843_200,
                crate::strategy::Aggregate::MmixAgg => 1_228_800,
            };
        }
        if cfg.balance == Balance::MmixInt {
            spec.fp_bytes = [3_200, 6_400];
        }
    }
    spec
}

fn positive(rate: f64) -> Result<f64> {
    if rate > 0.0 && rate.is_finite() {
        Ok(rate)
    } else {
        Err(CoreError::NonPositiveRate(rate))
    }
}

/// Time-division uplink latency for one exchange; rates in bit/s.
pub fn latency_fp(p: &PayloadSpec, rate_a: f64, rate_b: f64) -> Result<f64> {
    let mut t = 0.0;
    if p.uploads[0] {
        t += (8 * p.fp_bytes[0]) as f64 / positive(rate_a)?;
    }
    if p.uploads[1] {
        t += (8 * p.fp_bytes[1]) as f64 / positive(rate_b)?;
    }
    Ok(t)
}

/// Time-division downlink latency for one exchange.
pub fn latency_bp(p: &PayloadSpec, rate_a: f64, rate_b: f64) -> Result<f64> {
    let bits = (8 * p.bp_bytes) as f64;
    let mut t = 0.0;
    if p.uploads[0] {
        t += bits / positive(rate_a)?;
    }
    if p.uploads[1] {
        t += bits / positive(rate_b)?;
    }
    Ok(t)
}

/// `N[k] = floor(tau / T_tot[k])`.
pub fn exchanges_per_interval(tau_s: f64, t_tot_s: f64) -> u64 {
    (tau_s / t_tot_s).floor() as u64
}

/// Interval index and cumulative exchange count for the `n`th exchange.
fn interval_of(n: u64, t_tot: &[f64], tau_s: f64) -> Result<(usize, u64)> {
    // k_n = max{k' >= 1 : S(k') <= n}; S is nondecreasing so the scan stops
    // at the first interval that overshoots n.
    let mut k_n = 1;
    let mut prefix = vec![0u64];
    for (i, &t) in t_tot.iter().enumerate() {
        let s = prefix[i] + exchanges_per_interval(tau_s, t);
        prefix.push(s);
        if s > n {
            return Ok((k_n, prefix[k_n - 1]));
        }
        k_n = i + 1;
    }
    Err(CoreError::SeriesExhausted { n, covered: *prefix.last().unwrap() })
}

/// `T_n` evaluated literally from the per-interval series `t_tot[k-1] = T_tot[k]`.
pub fn elapsed_time(n: u64, t_tot: &[f64], tau_s: f64) -> Result<f64> {
    if n == 0 {
        return Err(CoreError::config("n", "exchange index starts at 1"));
    }
    let (k_n, s_before) = interval_of(n, t_tot, tau_s)?;
    let head: f64 = t_tot[..k_n - 1].iter().sum();
    Ok(head + (n - s_before + 1) as f64 * t_tot[k_n - 1])
}

/// Event-driven clock: exchanges run back to back, each lasting the
/// `T_tot` of the interval in which it starts.
pub fn elapsed_time_event_driven(n: u64, t_tot: &[f64], tau_s: f64) -> Result<f64> {
    if n == 0 {
        return Err(CoreError::config("n", "exchange index starts at 1"));
    }
    let mut t = 0.0;
    for done in 0..n {
        let k = (t / tau_s).floor() as usize;
        let d = *t_tot.get(k).ok_or(CoreError::SeriesExhausted { n, covered: done })?;
        t += d;
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyConstants {
    pub add_j: f64,
    pub mult_j: f64,
    pub access_j: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            add_j: 0.9e-12,
            mult_j: 3.7e-12,
            access_j: 640e-12,
        }
    }
}

/// Operating power of one inference per interval, in watts.
pub fn power(counts: &OpCounts, tau_s: f64, e: &EnergyConstants) -> f64 {
    (counts.adds as f64 * e.add_j + counts.mults as f64 * e.mult_j + counts.params() as f64 * e.access_j) / tau_s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TComp {
    Fixed(f64),
    /// Host wall-clock per step; the interval series uses the running mean.
    Measured,
}

/// One reported optimisation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostRow {
    pub step: u64,
    pub k: usize,
    pub t_fp_s: f64,
    pub t_bp_s: f64,
    pub t_tot_s: f64,
    pub t_n_s: f64,
    pub ul_bytes_a: u64,
    pub ul_bytes_b: u64,
    pub dl_bytes: u64,
    pub power_w: [f64; 3],
}

pub const COST_CSV_HEADER: &str =
    "step,k,t_fp_s,t_bp_s,t_tot_s,T_n_s,ul_bytes_A,ul_bytes_B,dl_bytes,power_camA_W,power_camB_W,power_bs_W";

impl CostRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{},{},{},{:e},{:e},{:e}",
            self.step,
            self.k,
            self.t_fp_s,
            self.t_bp_s,
            self.t_tot_s,
            self.t_n_s,
            self.ul_bytes_a,
            self.ul_bytes_b,
            self.dl_bytes,
            self.power_w[0],
            self.power_w[1],
            self.power_w[2]
        )
    }
}

/// Per-run cost accounting.
///
/// `T_tot[k]` is derived per interval from the channel trace (tiled if the
/// run outlasts it). When uploads alternate between cameras the interval
/// value is the mean over the alternating exchange patterns.
#[derive(Clone, Debug)]
pub struct CostLedger {
    payload: PayloadSpec,
    patterns: Vec<[bool; 2]>,
    link: LinkParams,
    trace: ChannelTrace,
    rate_b: f64,
    t_comp: TComp,
    measured: Vec<f64>,
    series: Vec<f64>,
    series_comp: f64,
    pub power_w: [f64; 3],
    pub ul_bytes: [u64; 2],
    pub dl_bytes: u64,
    rows: Vec<CostRow>,
}

impl CostLedger {
    pub fn new(
        payload: PayloadSpec,
        patterns: Vec<[bool; 2]>,
        link: LinkParams,
        trace: ChannelTrace,
        t_comp: TComp,
        ops: &NodeOps,
        energy: &EnergyConstants,
    ) -> Result<Self> {
        if patterns.is_empty() {
            return Err(CoreError::Empty("upload patterns"));
        }
        if let TComp::Fixed(t) = t_comp {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CoreError::config("t_comp_s", format!("{t} must be finite and non-negative")));
            }
        }
        let rate_b = rate_cam_b(&link)?;
        let tau = trace.tau_s;
        Ok(Self {
            payload,
            patterns,
            link,
            trace,
            rate_b,
            t_comp,
            measured: Vec::new(),
            series: Vec::new(),
            series_comp: f64::NAN,
            power_w: [
                power(&ops.cam_a, tau, energy),
                power(&ops.cam_b, tau, energy),
                power(&ops.bs, tau, energy),
            ],
            ul_bytes: [0, 0],
            dl_bytes: 0,
            rows: Vec::new(),
        })
    }

    pub fn tau_s(&self) -> f64 {
        self.trace.tau_s
    }

    pub fn rows(&self) -> &[CostRow] {
        &self.rows
    }

    fn comp(&self) -> f64 {
        match self.t_comp {
            TComp::Fixed(t) => t,
            TComp::Measured if self.measured.is_empty() => 0.0,
            TComp::Measured => self.measured.iter().sum::<f64>() / self.measured.len() as f64,
        }
    }

    /// Rate of camera A during 1-based interval `k`.
    fn rate_a(&self, k: usize) -> Result<f64> {
        let len = self.trace.samples().len();
        let t = ((k - 1) % len) as f64 * self.trace.tau_s;
        rate_cam_a(t, &self.link, &self.trace)
    }

    /// `(T_FP, T_BP)` of one exchange with the given uploads in interval `k`.
    pub fn exchange_latency(&self, k: usize, uploads: [bool; 2]) -> Result<(f64, f64)> {
        let p = self.payload.with_uploads(uploads);
        let ra = self.rate_a(k)?;
        Ok((latency_fp(&p, ra, self.rate_b)?, latency_bp(&p, ra, self.rate_b)?))
    }

    fn interval_t_tot(&self, k: usize) -> Result<f64> {
        let mut sum = 0.0;
        for u in &self.patterns {
            let (fp, bp) = self.exchange_latency(k, *u)?;
            sum += fp + bp;
        }
        Ok(sum / self.patterns.len() as f64 + self.comp())
    }

    /// Extends the `T_tot` series until it certifies exchange `n`.
    fn ensure_series(&mut self, n: u64) -> Result<()> {
        let comp = self.comp();
        if comp != self.series_comp {
            self.series.clear();
            self.series_comp = comp;
        }
        let tau = self.trace.tau_s;
        loop {
            let covered: u64 = self.series.iter().map(|t| exchanges_per_interval(tau, *t)).sum();
            if covered > n {
                return Ok(());
            }
            if self.series.len() > 10_000_000 {
                return Err(CoreError::SeriesExhausted { n, covered });
            }
            let k = self.series.len() + 1;
            let t = self.interval_t_tot(k)?;
            if !(t > 0.0) {
                return Err(CoreError::config("t_comp_s", "exchange duration must be positive"));
            }
            self.series.push(t);
        }
    }

    pub fn series(&self) -> &[f64] {
        &self.series
    }

    /// Records exchange `n = rows + 1` with the given uploads.
    pub fn record_step(&mut self, uploads: [bool; 2], wall_s: Option<f64>) -> Result<CostRow> {
        if let (TComp::Measured, Some(w)) = (self.t_comp, wall_s) {
            self.measured.push(w);
        }
        let n = self.rows.len() as u64 + 1;
        self.ensure_series(n)?;
        let tau = self.trace.tau_s;
        let (k, _) = interval_of(n, &self.series, tau)?;
        let t_n = elapsed_time(n, &self.series, tau)?;
        let (t_fp, t_bp) = self.exchange_latency(k, uploads)?;
        let p = self.payload.with_uploads(uploads);
        self.ul_bytes[0] += p.uplink_bytes(CameraId::A);
        self.ul_bytes[1] += p.uplink_bytes(CameraId::B);
        self.dl_bytes += p.downlink_bytes();
        let row = CostRow {
            step: n,
            k,
            t_fp_s: t_fp,
            t_bp_s: t_bp,
            t_tot_s: t_fp + t_bp + self.comp(),
            t_n_s: t_n,
            ul_bytes_a: self.ul_bytes[0],
            ul_bytes_b: self.ul_bytes[1],
            dl_bytes: self.dl_bytes,
            power_w: self.power_w,
        };
        self.rows.push(row);
        Ok(row)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(COST_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.csv_line());
        }
        out
    }
}
