//! Strategy sweeps over a shared dataset.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hetsl_core::dataset::Dataset;
use hetsl_core::strategy::{Aggregate, Balance, Protocol, StrategyConfig};
use log::{error, info};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::run::{load_or_generate, run_on_dataset, write_artifacts, write_csv, MetricsReport, RESULTS_HEADER};

/// Cartesian product, protocols outermost.
pub fn strategy_grid(base: &StrategyConfig, protocols: &[Protocol], balances: &[Balance], aggregates: &[Aggregate]) -> Vec<StrategyConfig> {
    let mut out = Vec::new();
    for &protocol in protocols {
        for &balance in balances {
            for &aggregate in aggregates {
                out.push(StrategyConfig { protocol, balance, aggregate, ..base.clone() });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixRow {
    pub strategy: StrategyConfig,
    pub seed: u64,
    pub outcome: std::result::Result<MetricsReport, String>,
}

impl MatrixRow {
    /// Failed runs keep their identifying columns and leave metrics blank.
    pub fn record(&self) -> Vec<String> {
        match &self.outcome {
            Ok(r) => r.record(),
            Err(_) => {
                let mut r = vec![
                    self.strategy.protocol.to_string(),
                    self.strategy.balance.to_string(),
                    self.strategy.aggregate.to_string(),
                    self.seed.to_string(),
                ];
                r.resize(RESULTS_HEADER.len(), String::new());
                r
            }
        }
    }
}

fn run_dir(root: &Path, s: &StrategyConfig, seed: u64) -> std::path::PathBuf {
    root.join("runs").join(format!("{}_{}_{}_s{seed}", s.protocol, s.balance, s.aggregate))
}

/// Runs every strategy for every seed. Runs sharing a data seed share one
/// dataset. A failed run yields an error row and the sweep continues.
pub fn run_matrix(base: &ExperimentConfig, strategies: &[StrategyConfig], seeds: &[u64]) -> Result<Vec<MatrixRow>> {
    base.validate()?;
    if strategies.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Empty("matrix"));
    }
    let mut jobs = Vec::new();
    let mut data: BTreeMap<u64, std::result::Result<Dataset, String>> = BTreeMap::new();
    for &seed in seeds {
        for s in strategies {
            let cfg = ExperimentConfig { strategy: s.clone(), seed, ..base.clone() };
            let ds_seed = cfg.effective_data_seed();
            data.entry(ds_seed).or_insert_with(|| load_or_generate(&cfg).map_err(|e| e.to_string()));
            jobs.push((cfg, ds_seed));
        }
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<MatrixRow>>> = Mutex::new(vec![None; jobs.len()]);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some((cfg, ds_seed)) = jobs.get(i) else { break };
        let outcome = match &data[ds_seed] {
            Ok(ds) => run_on_dataset(cfg, ds).and_then(|out| {
                if let Some(root) = &base.out_dir {
                    write_artifacts(&out, cfg, &run_dir(root, &cfg.strategy, cfg.seed))?;
                }
                Ok(out.report)
            }),
            Err(e) => Err(HarnessError::config("dataset", e.clone())),
        };
        let outcome = outcome.map_err(|e| {
            error!("{} {} {} seed {} failed: {e}", cfg.strategy.protocol, cfg.strategy.balance, cfg.strategy.aggregate, cfg.seed);
            e.to_string()
        });
        let row = MatrixRow { strategy: cfg.strategy.clone(), seed: cfg.seed, outcome };
        slots.lock().expect("matrix slot lock")[i] = Some(row);
    };
    let workers = base.workers.min(jobs.len()).max(1);
    info!("matrix: {} runs on {} worker(s)", jobs.len(), workers);
    std::thread::scope(|scope| {
        for _ in 1..workers {
            scope.spawn(worker);
        }
        worker();
    });
    let rows: Vec<MatrixRow> = slots.into_inner().expect("matrix slot lock").into_iter().flatten().collect();
    if let Some(root) = &base.out_dir {
        write_matrix(root, &rows)?;
    }
    Ok(rows)
}

/// `results.csv` with one row per run, plus `errors.csv` when any failed.
pub fn write_matrix(dir: &Path, rows: &[MatrixRow]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_csv(&dir.join("results.csv"), &RESULTS_HEADER, rows.iter().map(MatrixRow::record))?;
    let failed: Vec<[String; 5]> = rows
        .iter()
        .filter_map(|r| {
            r.outcome.as_ref().err().map(|e| {
                [
                    r.strategy.protocol.to_string(),
                    r.strategy.balance.to_string(),
                    r.strategy.aggregate.to_string(),
                    r.seed.to_string(),
                    e.clone(),
                ]
            })
        })
        .collect();
    if !failed.is_empty() {
        write_csv(&dir.join("errors.csv"), &["protocol", "balance", "aggregate", "seed", "error"], failed)?;
    }
    Ok(())
}
