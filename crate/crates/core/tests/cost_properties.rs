use hetsl_core::arch::{fc1_weights, node_ops, ModelDims};
use hetsl_core::channel::{rate_cam_a, rate_cam_b, ChannelTrace, LinkParams};
use hetsl_core::cost::{
    elapsed_time, elapsed_time_event_driven, exchanges_per_interval, payloads, power, EnergyConstants, PayloadMode,
};
use hetsl_core::strategy::{Aggregate, Balance, CameraId, StrategyConfig};
use hetsl_tensor::OpCounts;
use proptest::prelude::*;

#[test]
fn mmixagg_shrinks_fc1_by_the_frame_ratio() {
    let d = ModelDims::default();
    for b in Balance::ALL {
        let conc = StrategyConfig { balance: *b, ..StrategyConfig::default() };
        let mmix = StrategyConfig { aggregate: Aggregate::MmixAgg, ..conc.clone() };
        let (pc, pm) = (payloads(&conc, &d, PayloadMode::Computed), payloads(&mmix, &d, PayloadMode::Computed));
        assert!(pm.bp_bytes < pc.bp_bytes);
        let n_a = conc.camera_frames(CameraId::A) as u64;
        let n_rss = conc.n_rss as u64;
        // bp_m / bp_c == (n_a + n_rss) / (2 n_a + n_rss)
        assert_eq!(pm.bp_bytes * (2 * n_a + n_rss), pc.bp_bytes * (n_a + n_rss));
        assert_eq!(fc1_weights(&conc, &d) - fc1_weights(&mmix, &d), 400 * n_a * 96);
    }
}

#[test]
fn power_is_additive_over_nodes_and_layers() {
    let e = EnergyConstants::default();
    let cfg = StrategyConfig::default();
    let ops = node_ops(&cfg, &ModelDims { filters: 8, ..ModelDims::default() }).unwrap();
    let total = power(&(ops.cam_a + ops.cam_b + ops.bs), 0.1, &e);
    let parts = power(&ops.cam_a, 0.1, &e) + power(&ops.cam_b, 0.1, &e) + power(&ops.bs, 0.1, &e);
    assert!((total - parts).abs() <= 1e-12 * total);
}

#[test]
fn rates_agree_at_equal_power() {
    // The static-link formula at the measured LoS power equals the blocked
    // link's formula at A = 1.
    let p = LinkParams::default();
    let trace = ChannelTrace::new(0.1, vec![1.0]).unwrap();
    let d = p.distance_for_rate(rate_cam_a(0.0, &p, &trace).unwrap());
    let at = LinkParams { distance_m: d, ..p.clone() };
    assert!((at.path_loss_power_dbm().unwrap() - p.los_power_dbm).abs() < 1e-9);
    assert!((rate_cam_b(&at).unwrap() - rate_cam_a(0.0, &p, &trace).unwrap()).abs() < 1e-3);
}

#[test]
fn literal_formula_first_interval_offset() {
    // Inside the first interval the formula runs one exchange ahead of the
    // back-to-back clock.
    let s = vec![0.03; 10];
    for n in 1..3 {
        let lit = elapsed_time(n, &s, 0.1).unwrap();
        let ev = elapsed_time_event_driven(n, &s, 0.1).unwrap();
        assert!((lit - ev - 0.03).abs() < 1e-12, "n={n}");
    }
}

#[test]
fn literal_formula_resets_at_interval_boundaries() {
    // k_n advances once S(k') reaches n, dropping the accumulated count.
    let s = vec![0.03; 10];
    assert!((elapsed_time(5, &s, 0.1).unwrap() - 0.18).abs() < 1e-12);
    assert!((elapsed_time(6, &s, 0.1).unwrap() - 0.15).abs() < 1e-12);
}

proptest! {
    #[test]
    fn power_is_linear(a in 0u64..1_000_000, m in 0u64..1_000_000, w in 0u64..100_000, s in 1u64..5) {
        let e = EnergyConstants::default();
        let c = OpCounts { adds: a, mults: m, weights: w, biases: 0 };
        let scaled = OpCounts { adds: s * a, mults: s * m, weights: s * w, biases: 0 };
        let p = power(&c, 0.1, &e);
        prop_assert!((power(&scaled, 0.1, &e) - s as f64 * p).abs() <= 1e-12 * p.max(1e-30) * s as f64);
    }

    #[test]
    fn event_clock_is_monotone(series in prop::collection::vec(0.001..0.2f64, 30..60), n in 1u64..40) {
        if let (Ok(a), Ok(b)) = (elapsed_time_event_driven(n, &series, 0.1), elapsed_time_event_driven(n + 1, &series, 0.1)) {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn exchange_count_is_floor(t in 1e-4..1.0f64) {
        let n = exchanges_per_interval(0.1, t);
        prop_assert!(n as f64 * t <= 0.1 + 1e-15);
        prop_assert!((n + 1) as f64 * t > 0.1);
    }
}
