//! `hetsl`: generate scenarios, train split models, sweep strategies and
//! print analytic cost tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetsl_core::dataset::{generate, save_dataset};
use hetsl_core::strategy::{Aggregate, Balance, Protocol};
use hetsl_harness::matrix::strategy_grid;
use hetsl_harness::report::{cost_report, COST_REPORT_HEADER};
use hetsl_harness::run::write_csv;
use hetsl_harness::{run_experiment, run_matrix, ExperimentConfig, HarnessError, Result};
use log::{error, info};

#[derive(Parser)]
#[command(name = "hetsl", version, about = "Split-learning RSS prediction simulator")]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene into a dataset directory.
    Generate(Common),
    /// Train and evaluate one configuration.
    Train(Common),
    /// Train every strategy combination on shared data.
    Matrix {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Payload, latency and power table without training.
    Cost {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        /// Linear attenuation of camera A's link.
        #[arg(long, default_value_t = 1.0)]
        attenuation: f64,
    },
}

#[derive(Args)]
struct Grid {
    /// Comma-separated protocols; defaults to the configured one.
    #[arg(long, value_delimiter = ',')]
    protocols: Vec<Protocol>,
    /// Comma-separated balancing methods; defaults to all.
    #[arg(long, value_delimiter = ',')]
    balances: Vec<Balance>,
    /// Comma-separated aggregation methods; defaults to all.
    #[arg(long, value_delimiter = ',')]
    aggregates: Vec<Aggregate>,
}

#[derive(Args)]
struct Common {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    balance: Option<String>,
    #[arg(long)]
    aggregate: Option<String>,
    /// Stored dataset directory instead of a generated scene.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    filters: Option<usize>,
    /// Number of prediction instants in a generated scene.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    eval_every: Option<u64>,
    /// `computed` or `published`.
    #[arg(long)]
    payload_mode: Option<String>,
    /// Seconds per step, or `measured`.
    #[arg(long)]
    t_comp: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Any other config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let show = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
        let flags: [(&str, Option<String>); 15] = [
            ("out_dir", show(&self.out)),
            ("protocol", self.protocol.clone()),
            ("balance", self.balance.clone()),
            ("aggregate", self.aggregate.clone()),
            ("dataset", show(&self.dataset)),
            ("seed", self.seed.map(|v| v.to_string())),
            ("data_seed", self.data_seed.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("learning_rate", self.learning_rate.map(|v| v.to_string())),
            ("filters", self.filters.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("eval_every", self.eval_every.map(|v| v.to_string())),
            ("payload_mode", self.payload_mode.clone()),
            ("t_comp", self.t_comp.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if let Some(w) = self.workers {
            cfg.set("workers", &w.to_string())?;
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| HarnessError::Config { field: "set".into(), reason: format!("expected KEY=VALUE, got `{kv}`") })?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.out_dir
        .as_deref()
        .ok_or_else(|| HarnessError::Config { field: "out_dir".into(), reason: "an output directory is required".into() })
}

fn grid(cfg: &ExperimentConfig, g: &Grid) -> Vec<hetsl_core::strategy::StrategyConfig> {
    let protocols = if g.protocols.is_empty() { vec![cfg.strategy.protocol] } else { g.protocols.clone() };
    let balances = if g.balances.is_empty() { Balance::ALL.to_vec() } else { g.balances.clone() };
    let aggregates = if g.aggregates.is_empty() { Aggregate::ALL.to_vec() } else { g.aggregates.clone() };
    strategy_grid(&cfg.strategy, &protocols, &balances, &aggregates)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.resolve()?;
            let dir = out_dir(&cfg)?;
            let mut g = cfg.generate.clone();
            g.seed = cfg.effective_data_seed();
            g.image = cfg.dims.image;
            let (ds, _) = generate(&g)?;
            save_dataset(&ds, dir)?;
            ds.attenuation_trace(cfg.link.los_power_dbm)?.write_csv(&dir.join("attenuation.csv"))?;
            info!("wrote {} samples to {}", ds.meta.k, dir.display());
        }
        Command::Train(common) => {
            let cfg = common.resolve()?;
            out_dir(&cfg)?;
            let out = run_experiment(&cfg)?;
            info!("RMSE {:.3} dB", out.report.rmse_db);
        }
        Command::Matrix { common, grid: g, seeds } => {
            let cfg = common.resolve()?;
            out_dir(&cfg)?;
            let rows = run_matrix(&cfg, &grid(&cfg, &g), &seeds)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            info!("matrix finished: {} runs, {} failed", rows.len(), failed);
        }
        Command::Cost { common, grid: g, attenuation } => {
            let cfg = common.resolve()?;
            let dir = out_dir(&cfg)?;
            std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
            let rows = cost_report(&grid(&cfg, &g), &cfg.dims, &cfg.link, cfg.payload_mode, cfg.generate.tau_s, attenuation)?;
            write_csv(&dir.join("cost_report.csv"), &COST_REPORT_HEADER, rows.iter().map(|r| r.record()))?;
            info!("wrote {} rows to {}", rows.len(), dir.join("cost_report.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).target(env_logger::Target::Stderr).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
