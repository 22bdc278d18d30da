//! Experiment configuration: defaults, `key=value` files and overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hetsl_core::arch::ModelDims;
use hetsl_core::channel::LinkParams;
use hetsl_core::cost::{PayloadMode, TComp};
use hetsl_core::dataset::GenerateConfig;
use hetsl_core::strategy::StrategyConfig;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: StrategyConfig,
    pub dims: ModelDims,
    /// Stored dataset; when absent one is generated from `generate`.
    pub dataset: Option<PathBuf>,
    pub generate: GenerateConfig,
    /// Scene seed; defaults to `seed`.
    pub data_seed: Option<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Test evaluation interval in steps for the time/accuracy curve.
    pub eval_every: u64,
    pub split_ratio: f64,
    /// Half-width of the LoS and NLoS bands used for condition labels.
    pub delta_db: f64,
    pub link: LinkParams,
    pub payload_mode: PayloadMode,
    pub t_comp: TComp,
    pub out_dir: Option<PathBuf>,
    /// Parallel runs in a matrix sweep.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyConfig::default(),
            dims: ModelDims::default(),
            dataset: None,
            generate: GenerateConfig::default(),
            data_seed: None,
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            eval_every: 50,
            split_ratio: 0.75,
            delta_db: 3.0,
            link: LinkParams::default(),
            payload_mode: PayloadMode::Computed,
            t_comp: TComp::Fixed(1e-3),
            out_dir: None,
            workers: 1,
        }
    }
}

fn num<T: FromStr>(field: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| HarnessError::config(field, format!("cannot parse `{v}`")))
}

fn path_or_none(v: &str) -> Option<PathBuf> {
    match v {
        "" | "none" => None,
        _ => Some(PathBuf::from(v)),
    }
}

impl ExperimentConfig {
    pub fn effective_data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    /// Sets one field by key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if self.strategy.set(key, value)? {
            if key == "c" && self.strategy.c.fract() == 0.0 && self.strategy.c >= 1.0 {
                self.generate.c = self.strategy.c as usize;
            }
            return Ok(());
        }
        let g = &mut self.generate;
        let l = &mut self.link;
        match key {
            "filters" => self.dims.filters = num(key, value)?,
            "kernel" => self.dims.kernel = num(key, value)?,
            "image" => {
                self.dims.image = num(key, value)?;
                g.image = self.dims.image;
            }
            "fc1_units" => self.dims.fc1_units = num(key, value)?,
            "dataset" => self.dataset = path_or_none(value),
            "k" => g.k = num(key, value)?,
            "tau_s" => g.tau_s = num(key, value)?,
            "data_seed" => self.data_seed = if value == "none" { None } else { Some(num(key, value)?) },
            "pixel_noise" => g.pixel_noise = num(key, value)?,
            "power_noise_db" => g.power_noise_db = num(key, value)?,
            "depth_db" => g.depth_db = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "split_ratio" => self.split_ratio = num(key, value)?,
            "delta_db" => self.delta_db = num(key, value)?,
            "bandwidth_hz" => l.bandwidth_hz = num(key, value)?,
            "noise_dbm" => l.noise_dbm = num(key, value)?,
            "los_power_dbm" => {
                l.los_power_dbm = num(key, value)?;
                g.los_dbm = l.los_power_dbm;
            }
            "tx_power_dbm" => l.tx_power_dbm = num(key, value)?,
            "tx_gain_dbi" => l.tx_gain_dbi = num(key, value)?,
            "rx_gain_dbi" => l.rx_gain_dbi = num(key, value)?,
            "path_loss_exponent" => l.path_loss_exponent = num(key, value)?,
            "ref_path_loss_db" => l.ref_path_loss_db = num(key, value)?,
            "ref_distance_m" => l.ref_distance_m = num(key, value)?,
            "distance_m" => l.distance_m = num(key, value)?,
            "payload_mode" => self.payload_mode = value.parse()?,
            "t_comp" => {
                self.t_comp = match value {
                    "measured" => TComp::Measured,
                    v => TComp::Fixed(num(key, v)?),
                }
            }
            "out_dir" => self.out_dir = path_or_none(value),
            "workers" => self.workers = num(key, value)?,
            _ => return Err(HarnessError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| HarnessError::ConfigFile { path: path.to_path_buf(), line: i + 1, reason };
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            self.set(k.trim(), v).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        self.link.validate()?;
        self.generate.scene.validate()?;
        let d = &self.dims;
        if d.filters == 0 || d.fc1_units == 0 || d.kernel.is_multiple_of(2) {
            return Err(HarnessError::config("dims", "filters and fc1_units must be positive, kernel odd"));
        }
        if d.image == 0 || !d.image.is_multiple_of(2) {
            return Err(HarnessError::config("image", "must be a positive even pixel count"));
        }
        if self.strategy.c != self.generate.c as f64 {
            return Err(HarnessError::config("c", "strategy and scene frame-rate ratios differ"));
        }
        if self.epochs < 1 {
            return Err(HarnessError::config("epochs", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(HarnessError::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HarnessError::config("learning_rate", "must be positive"));
        }
        if self.eval_every < 1 {
            return Err(HarnessError::config("eval_every", "must be at least 1"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(HarnessError::config("split_ratio", "must lie in (0, 1)"));
        }
        if !(self.delta_db >= 0.0) {
            return Err(HarnessError::config("delta_db", "must be non-negative"));
        }
        if self.workers < 1 {
            return Err(HarnessError::config("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Canonical `key=value` dump; `apply_text` on it reproduces `self`.
    pub fn to_kv(&self) -> String {
        let mut out = self.strategy.to_kv();
        if !out.ends_with('\n') {
            out.push('\n');
        }
        let d = &self.dims;
        let g = &self.generate;
        let l = &self.link;
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let _ = writeln!(out, "filters={}\nkernel={}\nimage={}\nfc1_units={}", d.filters, d.kernel, d.image, d.fc1_units);
        let _ = writeln!(out, "dataset={}", opt_path(&self.dataset));
        let _ = writeln!(out, "k={}\ntau_s={}", g.k, g.tau_s);
        let _ = writeln!(out, "data_seed={}", self.data_seed.map_or("none".to_string(), |s| s.to_string()));
        let _ = writeln!(out, "pixel_noise={}\npower_noise_db={}\ndepth_db={}", g.pixel_noise, g.power_noise_db, g.depth_db);
        let _ = writeln!(out, "epochs={}\nbatch_size={}\nlearning_rate={}", self.epochs, self.batch_size, self.learning_rate);
        let _ = writeln!(out, "seed={}\neval_every={}\nsplit_ratio={}", self.seed, self.eval_every, self.split_ratio);
        let _ = writeln!(out, "delta_db={}", self.delta_db);
        let _ = writeln!(out, "bandwidth_hz={}\nnoise_dbm={}\nlos_power_dbm={}", l.bandwidth_hz, l.noise_dbm, l.los_power_dbm);
        let _ = writeln!(out, "tx_power_dbm={}\ntx_gain_dbi={}\nrx_gain_dbi={}", l.tx_power_dbm, l.tx_gain_dbi, l.rx_gain_dbi);
        let _ = writeln!(out, "path_loss_exponent={}\nref_path_loss_db={}", l.path_loss_exponent, l.ref_path_loss_db);
        let _ = writeln!(out, "ref_distance_m={}\ndistance_m={}", l.ref_distance_m, l.distance_m);
        let _ = writeln!(out, "payload_mode={}", self.payload_mode);
        let t = match self.t_comp {
            TComp::Fixed(t) => t.to_string(),
            TComp::Measured => "measured".to_string(),
        };
        let _ = writeln!(out, "t_comp={t}");
        let _ = writeln!(out, "out_dir={}", opt_path(&self.out_dir));
        let _ = writeln!(out, "workers={}", self.workers);
        out
    }
}
