//! Protocol and frame-rate balancing configuration.

use std::fmt;
use std::str::FromStr;

use crate::error::{CoreError, Result};

/// Pixels per camera feature frame (20 x 20).
pub const FEATURE_PIXELS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Balance {
    Disc,
    MixInt,
    MmixInt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregate {
    ConcAgg,
    MmixAgg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Protocol {
    HetSLAgg,
    HetSLFedAvg,
    CamARf,
    CamBRf,
    RfOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CameraId {
    A,
    B,
}

impl CameraId {
    pub fn index(self) -> usize {
        match self {
            CameraId::A => 0,
            CameraId::B => 1,
        }
    }
}

macro_rules! text_enum {
    ($ty:ident, $what:literal, { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = CoreError;

            fn from_str(s: &str) -> Result<Self> {
                $ty::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
                    .ok_or_else(|| {
                        let names: Vec<_> = $ty::ALL.iter().map(|v| v.name()).collect();
                        CoreError::config($what, format!("`{s}` is not one of {}", names.join(", ")))
                    })
            }
        }
    };
}

text_enum!(Balance, "balance", { Disc => "Disc", MixInt => "MixInt", MmixInt => "MmixInt" });
text_enum!(Aggregate, "aggregate", { ConcAgg => "ConcAgg", MmixAgg => "MmixAgg" });
text_enum!(Protocol, "protocol", {
    HetSLAgg => "HetSLAgg",
    HetSLFedAvg => "HetSLFedAvg",
    CamARf => "CamA_RF",
    CamBRf => "CamB_RF",
    RfOnly => "RF_only",
});

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub protocol: Protocol,
    pub balance: Balance,
    pub aggregate: Aggregate,
    pub lambda_agg: f64,
    /// Camera-A to camera-B frame-rate ratio.
    pub c: f64,
    /// Received-power samples in the look-back window.
    pub n_rss: usize,
    /// Averaging period in rounds (HetSLFedAvg only).
    pub fedavg_period: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::HetSLAgg,
            balance: Balance::MixInt,
            aggregate: Aggregate::ConcAgg,
            lambda_agg: 0.5,
            c: 3.0,
            n_rss: 2,
            fedavg_period: 1,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_agg > 0.0 && self.lambda_agg < 1.0) {
            return Err(CoreError::config("lambda_agg", format!("{} not in (0, 1)", self.lambda_agg)));
        }
        if !(self.c > 1.0) {
            return Err(CoreError::config("c", format!("{} must exceed 1", self.c)));
        }
        if self.c.fract() != 0.0 {
            return Err(CoreError::config("c", format!("{} must be an integer ratio", self.c)));
        }
        if self.n_rss < 1 {
            return Err(CoreError::config("n_rss", "must be at least 1"));
        }
        if self.fedavg_period < 1 {
            return Err(CoreError::config("fedavg_period", "must be at least 1"));
        }
        Ok(())
    }

    pub fn ratio(&self) -> usize {
        self.c as usize
    }

    /// Camera-B frames in the look-back window (one per power sample).
    pub fn window_frames_b(&self) -> usize {
        self.n_rss
    }

    /// Camera-A frames in the look-back window.
    pub fn window_frames_a(&self) -> usize {
        self.ratio() * (self.n_rss - 1) + 1
    }

    pub fn uses_camera(&self, cam: CameraId) -> bool {
        match self.protocol {
            Protocol::HetSLAgg | Protocol::HetSLFedAvg => true,
            Protocol::CamARf => cam == CameraId::A,
            Protocol::CamBRf => cam == CameraId::B,
            Protocol::RfOnly => false,
        }
    }

    /// Frames fed through camera `cam`'s segment (`N_img`).
    pub fn camera_frames(&self, cam: CameraId) -> usize {
        let fine = self.window_frames_a();
        match (self.balance, cam) {
            (Balance::Disc, _) => self.window_frames_b(),
            (Balance::MixInt, _) => fine,
            (Balance::MmixInt, CameraId::A) => fine,
            (Balance::MmixInt, CameraId::B) => self.window_frames_b(),
        }
    }

    /// Frames per camera after any BS-side interpolation.
    pub fn aligned_frames(&self) -> usize {
        match self.balance {
            Balance::Disc => self.window_frames_b(),
            Balance::MixInt | Balance::MmixInt => self.window_frames_a(),
        }
    }

    /// Image frames reaching fc1 (`N_img^(BS,agg)`).
    pub fn bs_image_frames(&self) -> usize {
        let n = self.aligned_frames();
        match self.protocol {
            Protocol::RfOnly => 0,
            Protocol::CamARf | Protocol::CamBRf | Protocol::HetSLFedAvg => n,
            Protocol::HetSLAgg => match self.aggregate {
                Aggregate::ConcAgg => 2 * n,
                Aggregate::MmixAgg => n,
            },
        }
    }

    pub fn fc1_in_dim(&self) -> usize {
        FEATURE_PIXELS * (self.bs_image_frames() + self.n_rss)
    }

    /// Key=value text used inside checkpoints.
    pub fn to_kv(&self) -> String {
        format!(
            "protocol={}\nbalance={}\naggregate={}\nlambda_agg={}\nc={}\nn_rss={}\nfedavg_period={}\n",
            self.protocol, self.balance, self.aggregate, self.lambda_agg, self.c, self.n_rss, self.fedavg_period
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = StrategyConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CoreError::config("strategy", format!("expected key=value, got `{line}`")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field by name; returns `Ok(false)` for an unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(field: &'static str, v: &str) -> Result<T> {
            v.parse().map_err(|_| CoreError::config(field, format!("cannot parse `{v}`")))
        }
        match key {
            "protocol" => self.protocol = value.parse()?,
            "balance" => self.balance = value.parse()?,
            "aggregate" => self.aggregate = value.parse()?,
            "lambda_agg" => self.lambda_agg = num("lambda_agg", value)?,
            "c" => self.c = num("c", value)?,
            "n_rss" => self.n_rss = num("n_rss", value)?,
            "fedavg_period" => self.fedavg_period = num("fedavg_period", value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
