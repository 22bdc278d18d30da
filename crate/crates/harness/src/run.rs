//! Single training runs: data, model, cost ledger, evaluation, artifacts.

use std::path::Path;

use hetsl_core::arch::node_ops;
use hetsl_core::checkpoint::save_checkpoint;
use hetsl_core::cost::{payloads, CostLedger, EnergyConstants};
use hetsl_core::dataset::{generate, load_dataset, split, Dataset, Sample};
use hetsl_core::model::{Batch, PowerScaling, SplitModel};
use hetsl_core::strategy::{Aggregate, Balance, Protocol};
use hetsl_tensor::AdamConfig;
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::metrics::{condition_rmse, rmse, Condition, Thresholds};

pub const RESULTS_HEADER: [&str; 13] = [
    "protocol",
    "balance",
    "aggregate",
    "seed",
    "rmse_db",
    "rmse_los_db",
    "rmse_nlos_db",
    "rmse_trans_db",
    "ul_bytes_total",
    "camA_power_w",
    "camB_power_w",
    "bs_power_w",
    "t_final_s",
];

pub const CURVE_HEADER: [&str; 3] = ["n", "T_n_s", "test_rmse_db"];
pub const PREDICTIONS_HEADER: [&str; 4] = ["k", "truth_dbm", "pred_dbm", "condition"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub n: u64,
    pub t_n_s: f64,
    pub test_rmse_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub balance: Balance,
    pub aggregate: Aggregate,
    pub seed: u64,
    pub rmse_db: f64,
    /// LoS, NLoS and transition RMSE; NaN when the test split has none.
    pub rmse_condition_db: [f64; 3],
    pub ul_bytes_total: u64,
    /// Camera A, camera B and BS operating power.
    pub power_w: [f64; 3],
    pub t_final_s: f64,
    pub steps: u64,
    pub curve: Vec<CurvePoint>,
}

impl MetricsReport {
    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.protocol.to_string(),
            self.balance.to_string(),
            self.aggregate.to_string(),
            self.seed.to_string(),
            self.rmse_db.to_string(),
        ];
        r.extend(self.rmse_condition_db.iter().map(f64::to_string));
        r.push(self.ul_bytes_total.to_string());
        r.extend(self.power_w.iter().map(f64::to_string));
        r.push(self.t_final_s.to_string());
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub k: usize,
    pub truth_dbm: f64,
    pub pred_dbm: f64,
    pub condition: Condition,
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub predictions: Vec<Prediction>,
    pub ledger: CostLedger,
    pub model: SplitModel,
}

/// Loads `cfg.dataset` or generates the scene for the effective data seed.
pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        Some(dir) => {
            let ds = load_dataset(dir)?;
            if ds.meta.c != cfg.generate.c {
                return Err(HarnessError::config("c", format!("dataset has c={} but config has c={}", ds.meta.c, cfg.generate.c)));
            }
            Ok(ds)
        }
        None => {
            let mut g = cfg.generate.clone();
            g.seed = cfg.effective_data_seed();
            g.image = cfg.dims.image;
            Ok(generate(&g)?.0)
        }
    }
}

fn chunked_batches(ds: &Dataset, samples: &[Sample], size: usize) -> Result<Vec<Batch>> {
    samples
        .chunks(size)
        .map(|c| Ok(ds.batch(&c.iter().collect::<Vec<_>>())?))
        .collect()
}

fn predict_all(model: &mut SplitModel, batches: &[Batch]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for b in batches {
        out.extend(model.predict(b)?);
    }
    Ok(out)
}

/// Trains and evaluates per `cfg` on an already available dataset.
pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<RunOutput> {
    cfg.validate()?;
    if ds.meta.height != cfg.dims.image || ds.meta.width != cfg.dims.image {
        return Err(HarnessError::config("image", format!("dataset frames are {}x{}", ds.meta.height, ds.meta.width)));
    }
    let samples = ds.samples(cfg.strategy.n_rss)?;
    let (train, test) = split(&samples, cfg.split_ratio)?;
    let train_labels: Vec<f64> = train.iter().map(|s| ds.power_dbm[s.label]).collect();
    let scaling = PowerScaling::fit(&train_labels)?;
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
    let mut model = SplitModel::new(cfg.strategy.clone(), cfg.dims, scaling, adam, cfg.seed)?;

    let ops = node_ops(&cfg.strategy, &cfg.dims)?;
    let mut ledger = CostLedger::new(
        payloads(&cfg.strategy, &cfg.dims, cfg.payload_mode),
        model.upload_patterns(),
        cfg.link.clone(),
        ds.attenuation_trace(cfg.link.los_power_dbm)?,
        cfg.t_comp,
        &ops,
        &EnergyConstants::default(),
    )?;

    let eval_size = cfg.batch_size.clamp(1, 32);
    let test_batches = chunked_batches(ds, &test, eval_size)?;
    let truths: Vec<f64> = test.iter().map(|s| ds.power_dbm[s.label]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(11);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    info!(
        "{} {} {} seed {}: {} train / {} test samples, {} steps",
        cfg.strategy.protocol,
        cfg.strategy.balance,
        cfg.strategy.aggregate,
        cfg.seed,
        train.len(),
        test.len(),
        steps_per_epoch * cfg.epochs
    );
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let picked: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = ds.batch(&picked)?;
            let loss = model.train_step(&batch, Some(&mut ledger))?;
            let n = model.steps();
            if !loss.is_finite() {
                return Err(HarnessError::Diverged { step: n, loss });
            }
            epoch_loss += loss;
            if n % cfg.eval_every == 0 {
                let r = rmse(&predict_all(&mut model, &test_batches)?, &truths)?;
                curve.push(CurvePoint { n, t_n_s: ledger.rows()[n as usize - 1].t_n_s, test_rmse_db: r });
            }
        }
        debug!("epoch {}: mean loss {:.5}", epoch + 1, epoch_loss / steps_per_epoch as f64);
    }

    let preds = predict_all(&mut model, &test_batches)?;
    let overall = rmse(&preds, &truths)?;
    let steps = model.steps();
    let t_final_s = ledger.rows().last().map_or(0.0, |r| r.t_n_s);
    if curve.last().map(|p| p.n) != Some(steps) {
        curve.push(CurvePoint { n: steps, t_n_s: t_final_s, test_rmse_db: overall });
    }
    let th = Thresholds { los_dbm: cfg.link.los_power_dbm, depth_db: cfg.generate.depth_db, delta_db: cfg.delta_db };
    let labels: Vec<Condition> = truths.iter().map(|&p| th.classify(p)).collect();
    let mut by_cond = [0.0; 3];
    for (slot, c) in by_cond.iter_mut().zip(Condition::ALL) {
        *slot = condition_rmse(&preds, &truths, &labels, c)?;
    }
    let predictions = test
        .iter()
        .zip(&preds)
        .zip(&labels)
        .map(|((s, &p), &c)| Prediction { k: s.k, truth_dbm: ds.power_dbm[s.label], pred_dbm: p, condition: c })
        .collect();
    let report = MetricsReport {
        protocol: cfg.strategy.protocol,
        balance: cfg.strategy.balance,
        aggregate: cfg.strategy.aggregate,
        seed: cfg.seed,
        rmse_db: overall,
        rmse_condition_db: by_cond,
        ul_bytes_total: ledger.ul_bytes.iter().sum(),
        power_w: ledger.power_w,
        t_final_s,
        steps,
        curve,
    };
    info!("test RMSE {:.3} dB after {} steps, T_n {:.3} s", overall, steps, t_final_s);
    Ok(RunOutput { report, predictions, ledger, model })
}

/// Loads or generates the data, runs, and writes artifacts to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let ds = load_or_generate(cfg)?;
    let out = run_on_dataset(cfg, &ds)?;
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(&out, cfg, dir)?;
    }
    Ok(out)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })
}

/// Writes a header and rows with the `csv` crate.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let wrap = |source| HarnessError::Csv { path: path.to_path_buf(), source };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_artifacts(out: &RunOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_csv(&dir.join("results.csv"), &RESULTS_HEADER, [out.report.record()])?;
    let curve = out.report.curve.iter().map(|p| [p.n.to_string(), p.t_n_s.to_string(), p.test_rmse_db.to_string()]);
    write_csv(&dir.join("curve.csv"), &CURVE_HEADER, curve)?;
    let preds = out.predictions.iter().map(|p| {
        [p.k.to_string(), p.truth_dbm.to_string(), p.pred_dbm.to_string(), p.condition.to_string()]
    });
    write_csv(&dir.join("predictions.csv"), &PREDICTIONS_HEADER, preds)?;
    let cost = dir.join("cost.csv");
    std::fs::write(&cost, out.ledger.to_csv()).map_err(|e| HarnessError::io(&cost, e))?;
    let conf = dir.join("config.txt");
    std::fs::write(&conf, cfg.to_kv()).map_err(|e| HarnessError::io(&conf, e))?;
    save_checkpoint(&out.model, &dir.join("model.ckpt"))?;
    Ok(())
}
