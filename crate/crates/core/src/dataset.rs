//! Windowed, labelled samples and the on-disk dataset container.
//!
//! A dataset directory holds:
//!
//! * `meta.txt`: `key=value` lines (`format_version`, `k`, `tau_s`, `c`,
//!   `height`, `width`, `frames_a`, `frames_b`, `seed`);
//! * `cam_a.bin`, `cam_b.bin`: frame-major, row-major little-endian `f32`;
//! * `power.csv`: header `k,p_dbm`, one row per interval boundary.
//!
//! Camera B has one frame per interval, camera A `c` per interval.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use hetsl_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelTrace;
use crate::error::{CoreError, Result};
use crate::model::Batch;
use crate::scenario::{add_pixel_noise, default_cameras, render_depth, synth_power_trace, SceneConfig, ScenePath};

pub const DATASET_FORMAT_VERSION: u32 = 1;
/// Label look-ahead in intervals (500 ms at tau = 100 ms).
pub const HORIZON: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub k: usize,
    pub tau_s: f64,
    pub c: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl DatasetMeta {
    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn frames_a(&self) -> usize {
        self.c * self.k + 1
    }

    pub fn frames_b(&self) -> usize {
        self.k + 1
    }

    pub fn power_len(&self) -> usize {
        self.k + HORIZON + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub cam_a: Vec<f32>,
    pub cam_b: Vec<f32>,
    pub power_dbm: Vec<f64>,
}

/// One labelled look-back window, by reference into a [`Dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub k: usize,
    pub b_frames: Vec<usize>,
    pub a_frames: Vec<usize>,
    /// Indices into the power series, oldest first.
    pub power: Vec<usize>,
    pub label: usize,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        let bad = |field: &'static str, need: usize, have: usize| CoreError::config(field, format!("need {need} values, have {have}"));
        if self.cam_a.len() != m.frames_a() * m.frame_len() {
            return Err(bad("cam_a", m.frames_a() * m.frame_len(), self.cam_a.len()));
        }
        if self.cam_b.len() != m.frames_b() * m.frame_len() {
            return Err(bad("cam_b", m.frames_b() * m.frame_len(), self.cam_b.len()));
        }
        if self.power_dbm.len() < m.power_len() {
            return Err(bad("power", m.power_len(), self.power_dbm.len()));
        }
        Ok(())
    }

    /// Samples `k = 1..=K` for a look-back of `n_rss` power values.
    pub fn samples(&self, n_rss: usize) -> Result<Vec<Sample>> {
        build_samples(&self.meta, self.power_dbm.len(), n_rss)
    }

    pub fn frame_a(&self, i: usize) -> &[f32] {
        let n = self.meta.frame_len();
        &self.cam_a[i * n..(i + 1) * n]
    }

    pub fn frame_b(&self, i: usize) -> &[f32] {
        let n = self.meta.frame_len();
        &self.cam_b[i * n..(i + 1) * n]
    }

    pub fn batch(&self, samples: &[&Sample]) -> Result<Batch> {
        let first = samples.first().ok_or(CoreError::Empty("batch"))?;
        let (h, w) = (self.meta.height, self.meta.width);
        let (na, nb, nr) = (first.a_frames.len(), first.b_frames.len(), first.power.len());
        let n = samples.len();
        let mut a = Vec::with_capacity(n * na * h * w);
        let mut b = Vec::with_capacity(n * nb * h * w);
        let mut rss = Vec::with_capacity(n * nr);
        let mut labels = Vec::with_capacity(n);
        for s in samples {
            for &i in &s.a_frames {
                a.extend(self.frame_a(i).iter().map(|&v| v as f64));
            }
            for &i in &s.b_frames {
                b.extend(self.frame_b(i).iter().map(|&v| v as f64));
            }
            rss.extend(s.power.iter().map(|&i| self.power_dbm[i]));
            labels.push(self.power_dbm[s.label]);
        }
        Ok(Batch {
            cam_a: Tensor::new(vec![n, na, 1, h, w], a)?,
            cam_b: Tensor::new(vec![n, nb, 1, h, w], b)?,
            rss_dbm: Tensor::new(vec![n, nr], rss)?,
            labels_dbm: labels,
        })
    }

    /// Attenuation staircase implied by the power series against `los_dbm`.
    pub fn attenuation_trace(&self, los_dbm: f64) -> Result<ChannelTrace> {
        let samples = self.power_dbm.iter().map(|p| 10f64.powf((p - los_dbm) / 10.0).clamp(1e-12, 1.0)).collect();
        ChannelTrace::new(self.meta.tau_s, samples)
    }
}

/// Window and label indices for `k = 1..=K`.
///
/// Sample `k` covers `[(k - n_rss + 1) tau, k tau]`: camera-B frames and
/// powers at each interval boundary, camera-A frames at every `tau / c`
/// step in between, and the label `P((k + HORIZON) tau)`.
pub fn build_samples(meta: &DatasetMeta, power_len: usize, n_rss: usize) -> Result<Vec<Sample>> {
    if n_rss < 2 {
        return Err(CoreError::config("n_rss", "a window needs at least two power samples"));
    }
    if power_len < meta.k + HORIZON + 1 {
        return Err(CoreError::InsufficientTrace { needed: meta.k + HORIZON + 1, available: power_len });
    }
    let first = n_rss - 1;
    if meta.k < first {
        return Err(CoreError::InsufficientTrace { needed: first, available: meta.k });
    }
    Ok((first.max(1)..=meta.k)
        .map(|k| {
            let start = k + 1 - n_rss;
            Sample {
                k,
                b_frames: (start..=k).collect(),
                a_frames: (meta.c * start..=meta.c * k).collect(),
                power: (start..=k).collect(),
                label: k + HORIZON,
            }
        })
        .collect())
}

/// Contiguous split: the first `floor(ratio K)` samples train.
pub fn split(samples: &[Sample], ratio: f64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CoreError::config("split_ratio", format!("{ratio} not in (0, 1)")));
    }
    let n = (ratio * samples.len() as f64).floor() as usize;
    if n == 0 || n == samples.len() {
        return Err(CoreError::EmptySplit { ratio, total: samples.len() });
    }
    Ok((samples[..n].to_vec(), samples[n..].to_vec()))
}

/// Scenario generation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerateConfig {
    pub k: usize,
    pub tau_s: f64,
    pub c: usize,
    pub image: usize,
    pub seed: u64,
    pub pixel_noise: f64,
    pub power_noise_db: f64,
    pub depth_db: f64,
    pub los_dbm: f64,
    pub scene: SceneConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            k: 600,
            tau_s: 0.1,
            c: 3,
            image: 40,
            seed: 0,
            pixel_noise: 0.01,
            power_noise_db: 0.5,
            depth_db: 15.0,
            los_dbm: -29.0,
            scene: SceneConfig::default(),
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Renders both cameras and the power trace for a sampled walk.
pub fn generate(cfg: &GenerateConfig) -> Result<(Dataset, ScenePath)> {
    if cfg.k == 0 || cfg.c == 0 || cfg.image == 0 {
        return Err(CoreError::config("generate", "k, c and image must be positive"));
    }
    if !(cfg.tau_s > 0.0) {
        return Err(CoreError::config("tau_s", "must be positive"));
    }
    let meta = DatasetMeta { k: cfg.k, tau_s: cfg.tau_s, c: cfg.c, height: cfg.image, width: cfg.image, seed: cfg.seed };
    let path = cfg.scene.sample_path(meta.power_len() as f64 * cfg.tau_s, cfg.seed)?;
    let [pose_a, pose_b] = default_cameras(cfg.scene.link_length_m);
    let power = synth_power_trace(&path, cfg.los_dbm, cfg.depth_db, cfg.power_noise_db, meta.power_len(), cfg.tau_s, &mut stream(cfg.seed, 1))?;
    let render = |pose, count: usize, dt: f64, rng: &mut ChaCha8Rng| -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(count * meta.frame_len());
        for i in 0..count {
            let mut img = render_depth(&path, pose, i as f64 * dt, cfg.image);
            add_pixel_noise(&mut img, cfg.pixel_noise, rng)?;
            out.extend(img.iter().map(|&v| v as f32));
        }
        Ok(out)
    };
    let cam_a = render(&pose_a, meta.frames_a(), cfg.tau_s / cfg.c as f64, &mut stream(cfg.seed, 2))?;
    let cam_b = render(&pose_b, meta.frames_b(), cfg.tau_s, &mut stream(cfg.seed, 3))?;
    Ok((Dataset { meta, cam_a, cam_b, power_dbm: power }, path))
}

fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
}

fn read_f32(path: &Path, count: usize) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let expected = (count * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(CoreError::Truncated { path: path.to_path_buf(), expected, found: bytes.len() as u64 });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let m = &ds.meta;
    let meta = format!(
        "format_version={DATASET_FORMAT_VERSION}\nk={}\ntau_s={}\nc={}\nheight={}\nwidth={}\nframes_a={}\nframes_b={}\nseed={}\n",
        m.k,
        m.tau_s,
        m.c,
        m.height,
        m.width,
        m.frames_a(),
        m.frames_b(),
        m.seed
    );
    let p = dir.join("meta.txt");
    std::fs::write(&p, meta).map_err(|e| CoreError::io(&p, e))?;
    write_f32(&dir.join("cam_a.bin"), &ds.cam_a)?;
    write_f32(&dir.join("cam_b.bin"), &ds.cam_b)?;
    let mut csv = String::from("k,p_dbm\n");
    for (k, p) in ds.power_dbm.iter().enumerate() {
        let _ = writeln!(csv, "{k},{p}");
    }
    let p = dir.join("power.csv");
    std::fs::write(&p, csv).map_err(|e| CoreError::io(&p, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("meta.txt");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| CoreError::io(&meta_path, e))?;
    let malformed = |reason: String| CoreError::MalformedHeader { path: meta_path.clone(), reason };
    let mut kv = HashMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line.split_once('=').ok_or_else(|| malformed(format!("expected key=value, got `{line}`")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    fn get<T: std::str::FromStr>(kv: &HashMap<String, String>, key: &str, bad: &dyn Fn(String) -> CoreError) -> Result<T> {
        let v = kv.get(key).ok_or_else(|| bad(format!("missing `{key}`")))?;
        v.parse().map_err(|_| bad(format!("cannot parse `{key}={v}`")))
    }
    let version: u32 = get(&kv, "format_version", &malformed)?;
    if version != DATASET_FORMAT_VERSION {
        return Err(CoreError::VersionMismatch { path: meta_path.clone(), expected: DATASET_FORMAT_VERSION, found: version });
    }
    let meta = DatasetMeta {
        k: get(&kv, "k", &malformed)?,
        tau_s: get(&kv, "tau_s", &malformed)?,
        c: get(&kv, "c", &malformed)?,
        height: get(&kv, "height", &malformed)?,
        width: get(&kv, "width", &malformed)?,
        seed: get(&kv, "seed", &malformed)?,
    };
    for (key, want) in [("frames_a", meta.frames_a()), ("frames_b", meta.frames_b())] {
        let have: usize = get(&kv, key, &malformed)?;
        if have != want {
            return Err(malformed(format!("`{key}={have}` inconsistent with k and c (expected {want})")));
        }
    }
    let cam_a = read_f32(&dir.join("cam_a.bin"), meta.frames_a() * meta.frame_len())?;
    let cam_b = read_f32(&dir.join("cam_b.bin"), meta.frames_b() * meta.frame_len())?;
    let power_path = dir.join("power.csv");
    let text = std::fs::read_to_string(&power_path).map_err(|e| CoreError::io(&power_path, e))?;
    let bad = |reason: String| CoreError::MalformedHeader { path: power_path.clone(), reason };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("k,p_dbm") {
        return Err(bad("expected header `k,p_dbm`".into()));
    }
    let mut power = Vec::with_capacity(meta.power_len());
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let (k, p) = line.split_once(',').ok_or_else(|| bad(format!("row {row}: `{line}`")))?;
        if k.trim().parse::<usize>().ok() != Some(row) {
            return Err(bad(format!("row {row}: index `{k}` out of order")));
        }
        power.push(p.trim().parse().map_err(|_| bad(format!("row {row}: `{p}`")))?);
    }
    if power.len() < meta.power_len() {
        return Err(CoreError::Truncated {
            path: power_path,
            expected: meta.power_len() as u64,
            found: power.len() as u64,
        });
    }
    let ds = Dataset { meta, cam_a, cam_b, power_dbm: power };
    ds.validate()?;
    Ok(ds)
}
