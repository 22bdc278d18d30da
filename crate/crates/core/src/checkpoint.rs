//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "HETSLCK\0"
//! version  u32
//! text     u32 length + UTF-8 key=value lines (strategy, dims, scaling)
//! count    u32
//! entries  count x { u32 name length, name, u32 rank, rank x u64 dims,
//!                    prod(dims) x f64 }
//! ```
//!
//! Optimiser state is not stored; a loaded model predicts identically but
//! restarts Adam from zero moments.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use hetsl_tensor::{AdamConfig, Tensor};

use crate::arch::ModelDims;
use crate::error::{CoreError, Result};
use crate::model::{PowerScaling, SplitModel};
use crate::strategy::StrategyConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HETSLCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn header_text(model: &SplitModel) -> String {
    let d = &model.dims;
    format!(
        "{}filters={}\nkernel={}\nimage={}\nfc1_units={}\nscale_mean_dbm={}\nscale_std_db={}\n",
        model.cfg.to_kv(),
        d.filters,
        d.kernel,
        d.image,
        d.fc1_units,
        model.scaling.mean_dbm,
        model.scaling.std_db
    )
}

pub fn to_bytes(model: &SplitModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let text = header_text(model);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let tensors = model.named_tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(CoreError::Truncated {
                path: self.path.to_path_buf(),
                expected: (self.pos + n) as u64,
                found: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn malformed(&self, reason: impl Into<String>) -> CoreError {
        CoreError::MalformedHeader { path: self.path.to_path_buf(), reason: reason.into() }
    }
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<SplitModel> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8).map_err(|_| r.malformed("missing magic"))? != CHECKPOINT_MAGIC {
        return Err(r.malformed("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CoreError::VersionMismatch { path: path.to_path_buf(), expected: CHECKPOINT_VERSION, found: version });
    }
    let text_len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(text_len)?).map_err(|e| r.malformed(format!("header text: {e}")))?;
    let mut cfg = StrategyConfig::default();
    let mut dims = ModelDims::default();
    let mut scaling = PowerScaling::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| r.malformed(format!("header line `{line}`")))?;
        if cfg.set(k, v)? {
            continue;
        }
        let bad = |_| r.malformed(format!("header value `{line}`"));
        match k {
            "filters" => dims.filters = v.parse().map_err(bad)?,
            "kernel" => dims.kernel = v.parse().map_err(bad)?,
            "image" => dims.image = v.parse().map_err(bad)?,
            "fc1_units" => dims.fc1_units = v.parse().map_err(bad)?,
            "scale_mean_dbm" => scaling.mean_dbm = v.parse().map_err(|_| r.malformed(format!("header value `{line}`")))?,
            "scale_std_db" => scaling.std_db = v.parse().map_err(|_| r.malformed(format!("header value `{line}`")))?,
            _ => return Err(r.malformed(format!("unknown header key `{k}`"))),
        }
    }
    let count = r.u32()? as usize;
    let mut stored: HashMap<String, Tensor> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| r.malformed(format!("tensor name: {e}")))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| r.malformed("tensor size overflow"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        stored.insert(name, Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(r.malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut model = SplitModel::new(cfg, dims, scaling, AdamConfig::default(), 0)?;
    let slots = model.named_tensors_mut();
    if slots.len() != stored.len() {
        return Err(r.malformed(format!("expected {} tensors, found {}", slots.len(), stored.len())));
    }
    for (name, slot) in slots {
        let t = stored.remove(&name).ok_or_else(|| r.malformed(format!("missing tensor `{name}`")))?;
        if t.shape() != slot.shape() {
            return Err(r.malformed(format!("tensor `{name}` has shape {:?}, expected {:?}", t.shape(), slot.shape())));
        }
        *slot = t;
    }
    Ok(model)
}

pub fn save_checkpoint(model: &SplitModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| CoreError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SplitModel> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(PathBuf::from(path), e))?;
    from_bytes(&bytes, path)
}
