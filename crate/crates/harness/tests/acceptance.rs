//! Acceptance gate. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits nonzero if any fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::io::Write;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hetsl_core::arch::{fc1_weights, node_ops, ModelDims};
use hetsl_core::channel::{rate_cam_a, rate_cam_b, ChannelTrace, LinkParams};
use hetsl_core::cost::{
    elapsed_time, elapsed_time_event_driven, exchanges_per_interval, payloads, power, EnergyConstants, PayloadMode,
};
use hetsl_core::mixup::{aggregate, manifold_mixup_interpolate, mix, mixup_interpolate_images, FeatureActivation};
use hetsl_core::model::{PowerScaling, SplitModel};
use hetsl_core::strategy::{Aggregate, Balance, CameraId, Protocol, StrategyConfig};
use hetsl_harness::{run_matrix, ExperimentConfig, MetricsReport};
use hetsl_tensor::gradcheck::{check_sequential, GradCheck};
use hetsl_tensor::{
    init_rng, Activation, AdamConfig, AvgPool2d, BatchNorm2d, Conv2d, ConvLstm, InitRng, Layer, Linear,
    Mode, Sequential, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Gate {
    failed: Vec<u32>,
}

impl Gate {
    fn report(&mut self, id: u32, pass: bool, elapsed: Duration, detail: String) {
        if !pass {
            self.failed.push(id);
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "criterion {id}: {verdict} ({:.2} s) {detail}", elapsed.as_secs_f64());
        let _ = out.flush();
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn cost_exactness() -> (bool, String) {
    let dims = ModelDims::default();
    let s = |balance, aggregate| StrategyConfig { balance, aggregate, ..StrategyConfig::default() };
    let disc = payloads(&s(Balance::Disc, Aggregate::ConcAgg), &dims, PayloadMode::Computed);
    let mix = payloads(&s(Balance::MixInt, Aggregate::ConcAgg), &dims, PayloadMode::Computed);
    let disc_m = payloads(&s(Balance::Disc, Aggregate::MmixAgg), &dims, PayloadMode::Computed);
    let got = [disc.fp_bytes[0], disc.fp_bytes[1], mix.fp_bytes[0], mix.fp_bytes[1], disc.bp_bytes, disc_m.bp_bytes];
    let want = [3200, 3200, 6400, 6400, 921_600, 614_400];
    (got == want, format!("payload bytes {got:?}, expected {want:?}"))
}

fn rates() -> (bool, String) {
    let link = LinkParams::default();
    let trace = ChannelTrace::new(0.1, vec![1.0]).unwrap();
    let a = rate_cam_a(0.0, &link, &trace).unwrap();
    let b = rate_cam_b(&link).unwrap();
    let ok = ((a - 18.1e9) / 18.1e9).abs() <= 0.02 && (19e9..=20e9).contains(&b);
    (ok, format!("rate_camA(A=1) = {:.3} Gbit/s, rate_camB = {:.3} Gbit/s", a / 1e9, b / 1e9))
}

fn random_tensor(shape: &[usize], rng: &mut InitRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn gradient_suite() -> (bool, String) {
    const SHAPES: usize = 20;
    let mut rng = init_rng(0xACCE);
    let mut worst = GradCheck::default();
    let mut cases = 0;
    let kinds = ["conv2d", "batchnorm-train", "batchnorm-eval", "avgpool", "convlstm", "linear"];
    for kind in kinds {
        for _ in 0..SHAPES {
            let r = &mut rng;
            let (model, x, mode) = match kind {
                "conv2d" => {
                    let (ci, co) = (r.random_range(1..4), r.random_range(1..4));
                    let x = random_tensor(&[r.random_range(1..3), ci, r.random_range(2..7), r.random_range(2..7)], r);
                    (Sequential::new().with("c", Layer::Conv2d(Conv2d::new(ci, co, 3, r))), x, Mode::Train)
                }
                "batchnorm-train" | "batchnorm-eval" => {
                    let c = r.random_range(1..4);
                    let mut bn = BatchNorm2d::new(c);
                    bn.gamma.value = random_tensor(&[c], r);
                    bn.beta.value = random_tensor(&[c], r);
                    let x = random_tensor(&[r.random_range(2..4), c, r.random_range(1..5), r.random_range(2..5)], r);
                    let mode = if kind == "batchnorm-eval" { Mode::Eval } else { Mode::Train };
                    (Sequential::new().with("bn", Layer::BatchNorm(bn)), x, mode)
                }
                "avgpool" => {
                    let x = random_tensor(&[2, r.random_range(1..4), 2 * r.random_range(1..4), 2 * r.random_range(1..4)], r);
                    (Sequential::new().with("p", Layer::AvgPool(AvgPool2d::new())), x, Mode::Train)
                }
                "convlstm" => {
                    let (c, hid) = (r.random_range(1..4), r.random_range(1..3));
                    let mut lstm = ConvLstm::new(c, hid, 3, r);
                    lstm.bias.value = random_tensor(&[4 * hid], r);
                    let shape = [r.random_range(1..3), r.random_range(1..4), c, r.random_range(1..5), r.random_range(1..5)];
                    let x = random_tensor(&shape, r);
                    (Sequential::new().with("l", Layer::ConvLstm(lstm)), x, Mode::Train)
                }
                _ => {
                    let (d, u) = (r.random_range(1..7), r.random_range(1..5));
                    let act = if r.random_bool(0.5) { Activation::Relu } else { Activation::Identity };
                    let mut fc = Linear::new(d, u, act, r);
                    fc.bias.value = random_tensor(&[u], r);
                    let x = random_tensor(&[r.random_range(1..4), d], r);
                    (Sequential::new().with("fc", Layer::Linear(fc)), x, Mode::Train)
                }
            };
            let g = check_sequential(&model, &x, mode, 40, &mut rng).unwrap();
            worst = worst.merge(g);
            cases += 1;
        }
    }
    let ok = worst.max_rel_err < 1e-4;
    (ok, format!("{cases} shapes over {} layer kinds, {} coordinates, max rel err {:.2e}", kinds.len(), worst.coordinates, worst.max_rel_err))
}

fn split_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5917);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let cfg = oracle::random_strategy(&mut rng);
        let scaling = PowerScaling { mean_dbm: -31.0, std_db: 4.0 };
        let mut m = SplitModel::new(cfg, oracle::small_dims(), scaling, AdamConfig::default(), 1000 + trial).unwrap();
        let n = rng.random_range(1..4);
        let batch = oracle::random_batch(&mut rng, n, &m.dims);
        worst = worst.max(oracle::split_vs_monolithic(&mut m, &batch));
    }
    (worst < 1e-10, format!("100 trials, max abs deviation {worst:.2e}"))
}

fn frames(a: &[f64], b: &[f64]) -> Tensor {
    let mut d = a.to_vec();
    d.extend_from_slice(b);
    Tensor::new(vec![1, 2, a.len()], d).unwrap()
}

fn mixup_algebra() -> (bool, String) {
    const CASES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x313);
    let mut bad = [0usize; 4];
    for _ in 0..CASES {
        let len = rng.random_range(1..10);
        let a: Vec<f64> = (0..len).map(|_| rng.random_range(-1e3..1e3)).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.random_range(-1e3..1e3)).collect();
        let x = frames(&a, &b);
        let ends = mixup_interpolate_images(&x, &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let endpoint_ok = ends == x && a.iter().zip(&b).all(|(p, q)| mix(*p, *q, 1.0) == *p && mix(*p, *q, 0.0) == *q);
        bad[0] += usize::from(!endpoint_ok);

        let k = rng.random_range(0.0..1.0);
        let act = FeatureActivation::new(CameraId::B, vec![0.0, 1.0], x.clone()).unwrap();
        let mid = manifold_mixup_interpolate(&act, &[k]).unwrap();
        let convex = mid.data.data().iter().zip(&a).zip(&b).all(|((v, p), q)| *v >= p.min(*q) && *v <= p.max(*q));
        bad[1] += usize::from(!convex);

        let lambda = rng.random_range(0.001..0.999);
        let mcfg = StrategyConfig { aggregate: Aggregate::MmixAgg, lambda_agg: lambda, ..StrategyConfig::default() };
        bad[2] += usize::from(aggregate(&x, &x, &mcfg).unwrap() != x);

        let (n, t) = (rng.random_range(1..4), rng.random_range(1..6));
        let ccfg = StrategyConfig { aggregate: Aggregate::ConcAgg, ..StrategyConfig::default() };
        let fa = Tensor::full(&[n, t, 1, 2, 2], 1.0);
        let fb = Tensor::full(&[n, t, 1, 2, 2], 2.0);
        bad[3] += usize::from(aggregate(&fa, &fb, &ccfg).unwrap().shape() != [n, 2 * t, 1, 2, 2]);
    }
    let ok = bad == [0; 4];
    (ok, format!("{CASES} cases each; violations endpoint/convex/idempotent/length = {bad:?}"))
}

/// Interval index of exchange `n` under the literal definition, computed
/// from scratch: the largest `k` with `S(k) <= n`, at least 1.
fn literal_k(n: u64, series: &[f64], tau: f64) -> Option<usize> {
    let mut s = 0;
    let mut k_n = 1;
    for (i, &t) in series.iter().enumerate() {
        s += exchanges_per_interval(tau, t);
        if s > n {
            return Some(k_n);
        }
        k_n = i + 1;
    }
    None
}

fn tn_cross_check() -> (bool, String) {
    const SERIES: usize = 1000;
    let tau = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7_0);
    let (mut pairs, mut offset_ok, mut monotone_bad, mut series_bad) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..SERIES {
        let len = rng.random_range(5..40);
        let series: Vec<f64> = (0..len).map(|_| rng.random_range(0.005..0.12)).collect();
        let mut prev = f64::NEG_INFINITY;
        let mut this_bad = false;
        for n in 1..200u64 {
            let (Ok(lit), Ok(ev), Some(k)) =
                (elapsed_time(n, &series, tau), elapsed_time_event_driven(n, &series, tau), literal_k(n, &series, tau))
            else {
                break;
            };
            pairs += 1;
            if (lit - ev - series[k - 1]).abs() <= 1e-9 {
                offset_ok += 1;
            }
            if lit < prev {
                monotone_bad += 1;
                this_bad = true;
            }
            prev = lit;
        }
        series_bad += usize::from(this_bad);
    }
    let constant = vec![0.03; 10];
    let (t5, t6) = (elapsed_time(5, &constant, tau).unwrap(), elapsed_time(6, &constant, tau).unwrap());
    let ok = offset_ok == pairs && monotone_bad == 0;
    let detail = format!(
        "{SERIES} series, {pairs} (series, n) pairs: {offset_ok} match event clock + T_tot[k_n]; \
         {monotone_bad} decreases of T_n in {series_bad} series (constant 0.03 s: T_5 = {t5:.2}, T_6 = {t6:.2})"
    );
    (ok, detail)
}

fn ordering_runs() -> Vec<(StrategyConfig, Vec<MetricsReport>)> {
    let mut base = ExperimentConfig::default();
    for (k, v) in [("filters", "4"), ("k", "600"), ("epochs", "10"), ("eval_every", "1000")] {
        base.set(k, v).unwrap();
    }
    let mixint = base.strategy.clone();
    let with = |protocol, balance| StrategyConfig { protocol, balance, ..mixint.clone() };
    let strategies = vec![
        with(Protocol::HetSLAgg, Balance::MixInt),
        with(Protocol::CamARf, Balance::MixInt),
        with(Protocol::CamBRf, Balance::MixInt),
        with(Protocol::RfOnly, Balance::MixInt),
        with(Protocol::HetSLFedAvg, Balance::MixInt),
        with(Protocol::HetSLAgg, Balance::MmixInt),
    ];
    let seeds: Vec<u64> = (0..5).collect();
    let rows = run_matrix(&base, &strategies, &seeds).unwrap();
    strategies
        .into_iter()
        .map(|s| {
            let reports = rows
                .iter()
                .filter(|r| r.strategy == s)
                .map(|r| r.outcome.clone().unwrap_or_else(|e| panic!("{s:?}: {e}")))
                .collect();
            (s, reports)
        })
        .collect()
}

fn rmses(runs: &[(StrategyConfig, Vec<MetricsReport>)], i: usize) -> Vec<f64> {
    runs[i].1.iter().map(|r| r.rmse_db).collect()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(" "))
}

fn efficiency(runs: &[(StrategyConfig, Vec<MetricsReport>)]) -> (bool, String) {
    let dims = ModelDims::default();
    let s = |balance, aggregate| StrategyConfig { balance, aggregate, ..StrategyConfig::default() };
    let pm = payloads(&s(Balance::MmixInt, Aggregate::ConcAgg), &dims, PayloadMode::Computed);
    let pi = payloads(&s(Balance::MixInt, Aggregate::ConcAgg), &dims, PayloadMode::Computed);
    let ul = |p: &hetsl_core::cost::PayloadSpec| p.uplink_bytes(CameraId::A) + p.uplink_bytes(CameraId::B);
    let uplink_ok = ul(&pm) < ul(&pi) && 2 * pm.fp_bytes[1] == pi.fp_bytes[1];

    let e = EnergyConstants::default();
    let mut bs_ok = true;
    for b in Balance::ALL {
        let (m, c) = (s(*b, Aggregate::MmixAgg), s(*b, Aggregate::ConcAgg));
        let (om, oc) = (node_ops(&m, &dims).unwrap().bs, node_ops(&c, &dims).unwrap().bs);
        bs_ok &= fc1_weights(&m, &dims) < fc1_weights(&c, &dims)
            && om.weights + om.biases < oc.weights + oc.biases
            && power(&om, 0.1, &e) < power(&oc, 0.1, &e);
    }
    let mix_mean = mean(&rmses(runs, 0));
    let mmix_mean = mean(&rmses(runs, 5));
    let rel = (mmix_mean - mix_mean).abs() / mix_mean;
    let ok = uplink_ok && bs_ok && rel <= 0.05;
    let detail = format!(
        "uplink/step MmixInt {} B < MixInt {} B (camera B {} -> {} B); BS params and power MmixAgg < ConcAgg: {bs_ok}; \
         mean RMSE MmixInt {mmix_mean:.3} vs MixInt {mix_mean:.3} dB ({:.1}%)",
        ul(&pm),
        ul(&pi),
        pi.fp_bytes[1],
        pm.fp_bytes[1],
        100.0 * rel
    );
    (ok, detail)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn count(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> bool) -> usize {
    a.iter().zip(b).filter(|(x, y)| f(**x, **y)).count()
}

fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let variants: [&[&str]; 2] = [
        &["--protocol", "HetSLAgg", "--balance", "MixInt", "--aggregate", "ConcAgg"],
        &["--protocol", "HetSLFedAvg", "--balance", "MmixInt", "--aggregate", "MmixAgg"],
    ];
    let mut identical = 0;
    for (i, v) in variants.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("v{i}_r{rep}"));
            let mut args = vec!["train", "--out", out.to_str().unwrap(), "--seed", "7", "--log", "warn"];
            args.extend(["--filters", "2", "--k", "96", "--epochs", "2", "--batch-size", "16"]);
            args.extend(v.iter());
            let status = Command::new(env!("CARGO_BIN_EXE_hetsl")).args(&args).status().unwrap();
            assert!(status.success(), "train {args:?} failed");
            let read = |f: &str| std::fs::read(out.join(f)).unwrap();
            outputs.push((read("results.csv"), read("model.ckpt")));
        }
        identical += usize::from(outputs[0] == outputs[1]);
    }
    (identical == variants.len(), format!("{identical}/{} configurations bitwise identical across repeated `train`", variants.len()))
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: Vec::new() };

    let ((ok, d), t) = timed(cost_exactness);
    gate.report(1, ok && t < Duration::from_secs(1), t, d);
    let ((ok, d), t) = timed(rates);
    gate.report(2, ok && t < Duration::from_secs(1), t, d);
    let ((ok, d), t) = timed(gradient_suite);
    gate.report(3, ok && t < Duration::from_secs(60), t, d);
    let ((ok, d), t) = timed(split_equivalence);
    gate.report(4, ok && t < Duration::from_secs(60), t, d);
    let ((ok, d), t) = timed(mixup_algebra);
    gate.report(5, ok && t < Duration::from_secs(30), t, d);

    let (runs, t) = timed(ordering_runs);
    let (het, a, b, rf, fed) = (rmses(&runs, 0), rmses(&runs, 1), rmses(&runs, 2), rmses(&runs, 3), rmses(&runs, 4));
    let singles_min: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect();
    let singles_max: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
    let beats_singles = count(&het, &singles_min, |h, s| h < s);
    let singles_beat_rf = count(&singles_max, &rf, |s, r| s < r);
    gate.report(
        6,
        beats_singles >= 4 && singles_beat_rf >= 4,
        t,
        format!(
            "HetSLAgg < min(single) in {beats_singles}/5, max(single) < RF_only in {singles_beat_rf}/5; \
             RMSE dB HetSLAgg {} CamA_RF {} CamB_RF {} RF_only {}",
            fmt(&het),
            fmt(&a),
            fmt(&b),
            fmt(&rf)
        ),
    );
    let fed_worse = count(&fed, &het, |f, h| f > h);
    gate.report(
        7,
        fed_worse >= 4,
        Duration::ZERO,
        format!("HetSLFedAvg > HetSLAgg in {fed_worse}/5; RMSE dB HetSLFedAvg {} (runs shared with criterion 6)", fmt(&fed)),
    );
    let ((ok, d), t) = timed(|| efficiency(&runs));
    gate.report(8, ok, t, d);
    let ((ok, d), t) = timed(tn_cross_check);
    gate.report(9, ok && t < Duration::from_secs(10), t, d);
    let ((ok, d), t) = timed(determinism);
    gate.report(10, ok, t, d);

    if gate.failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {:?}", gate.failed);
        ExitCode::FAILURE
    }
}
