//! Analytic cost report: payloads, latencies and power without training.

use hetsl_core::arch::{fc1_weights, node_ops, ModelDims};
use hetsl_core::channel::{rate_cam_a, rate_cam_b, ChannelTrace, LinkParams};
use hetsl_core::cost::{latency_bp, latency_fp, payloads, power, EnergyConstants, PayloadMode};
use hetsl_core::strategy::{CameraId, StrategyConfig};

use crate::error::Result;

pub const COST_REPORT_HEADER: [&str; 14] = [
    "protocol",
    "balance",
    "aggregate",
    "fp_bytes_a",
    "fp_bytes_b",
    "bp_bytes",
    "ul_bytes_per_step",
    "fc1_weights",
    "rate_a_bps",
    "t_fp_s",
    "t_bp_s",
    "camA_power_w",
    "camB_power_w",
    "bs_power_w",
];

#[derive(Clone, Debug, PartialEq)]
pub struct CostReportRow {
    pub strategy: StrategyConfig,
    pub fp_bytes: [u64; 2],
    pub bp_bytes: u64,
    pub ul_bytes_per_step: u64,
    pub fc1_weights: u64,
    pub rate_a_bps: f64,
    pub t_fp_s: f64,
    pub t_bp_s: f64,
    pub power_w: [f64; 3],
}

impl CostReportRow {
    pub fn record(&self) -> Vec<String> {
        let s = &self.strategy;
        let mut r = vec![s.protocol.to_string(), s.balance.to_string(), s.aggregate.to_string()];
        r.extend(self.fp_bytes.iter().map(u64::to_string));
        r.push(self.bp_bytes.to_string());
        r.push(self.ul_bytes_per_step.to_string());
        r.push(self.fc1_weights.to_string());
        r.push(self.rate_a_bps.to_string());
        r.push(self.t_fp_s.to_string());
        r.push(self.t_bp_s.to_string());
        r.extend(self.power_w.iter().map(f64::to_string));
        r
    }
}

/// One exchange of each strategy with camera A at attenuation `attenuation`.
pub fn cost_report(
    strategies: &[StrategyConfig],
    dims: &ModelDims,
    link: &LinkParams,
    mode: PayloadMode,
    tau_s: f64,
    attenuation: f64,
) -> Result<Vec<CostReportRow>> {
    let trace = ChannelTrace::new(tau_s, vec![attenuation])?;
    let ra = rate_cam_a(0.0, link, &trace)?;
    let rb = rate_cam_b(link)?;
    let e = EnergyConstants::default();
    strategies
        .iter()
        .map(|s| {
            s.validate()?;
            let p = payloads(s, dims, mode);
            let ops = node_ops(s, dims)?;
            Ok(CostReportRow {
                strategy: s.clone(),
                fp_bytes: p.fp_bytes,
                bp_bytes: p.bp_bytes,
                ul_bytes_per_step: p.uplink_bytes(CameraId::A) + p.uplink_bytes(CameraId::B),
                fc1_weights: fc1_weights(s, dims),
                rate_a_bps: ra,
                t_fp_s: latency_fp(&p, ra, rb)?,
                t_bp_s: latency_bp(&p, ra, rb)?,
                power_w: [power(&ops.cam_a, tau_s, &e), power(&ops.cam_b, tau_s, &e), power(&ops.bs, tau_s, &e)],
            })
        })
        .collect()
}
