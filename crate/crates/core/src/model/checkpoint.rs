//! Binary checkpoint format.
//!
//! ```text
//! u32 LE   magic 0x53504145
//! u32 LE   format version
//! u64 LE   metadata length in bytes
//! [u8]     UTF-8 `key=value` lines (model config, kind, step, seed, extras)
//! u32 LE   tensor count
//! repeat:  u64 LE element count, then that many f64 LE values
//! ```
//!
//! Tensors are the model parameters in [`ParamSet`] order, followed (when
//! present) by the first and then the second Adam moment of each parameter
//! tensor. The metadata key `moments` says whether they are present.

use std::collections::BTreeMap;
use std::path::Path;

use super::config::parse_kv;
use super::{Classifier, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: u32 = 0x5350_4145;
pub const CHECKPOINT_VERSION: u32 = 1;

/// Which network the parameters belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Autoencoder,
    Classifier { classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub config: ModelConfig,
    pub params: Vec<Vec<f64>>,
    /// Adam first and second moments, one entry per parameter tensor; empty when absent.
    pub adam_m: Vec<Vec<f64>>,
    pub adam_v: Vec<Vec<f64>>,
    pub step: u64,
    pub seed: u64,
    /// Free-form annotations (loss kind, regime, ...). Keys must not contain `=` or newlines.
    pub extra: BTreeMap<String, String>,
}

fn tensors_f64<T: Real, P: ParamSet<T>>(p: &P) -> Vec<Vec<f64>> {
    p.tensors().into_iter().map(|t| t.iter().map(|v| v.as_f64()).collect()).collect()
}

fn load_into<T: Real, P: ParamSet<T>>(p: &mut P, src: &[Vec<f64>]) -> Result<()> {
    let mut dst = p.tensors_mut();
    if dst.len() != src.len() {
        return Err(Error::ShapeConflict(format!("checkpoint has {} tensors, model has {}", src.len(), dst.len())));
    }
    for (i, (d, s)) in dst.iter_mut().zip(src).enumerate() {
        if d.len() != s.len() {
            return Err(Error::ShapeConflict(format!(
                "tensor {i}: checkpoint has {} values, model has {}",
                s.len(),
                d.len()
            )));
        }
        d.iter_mut().zip(s).for_each(|(a, b)| *a = T::lit(*b));
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &Model<T>, seed: u64) -> Self {
        Self {
            kind: CheckpointKind::Autoencoder,
            config: model.config.clone(),
            params: tensors_f64(model),
            adam_m: Vec::new(),
            adam_v: Vec::new(),
            step: 0,
            seed,
            extra: BTreeMap::new(),
        }
    }

    pub fn from_classifier<T: Real>(model: &Classifier<T>, seed: u64) -> Self {
        Self {
            kind: CheckpointKind::Classifier { classes: model.classes },
            params: tensors_f64(model),
            ..Self::from_model(&Model::<T>::zeros(&model.config).expect("classifier config is valid"), seed)
        }
    }

    /// Rebuilds the autoencoder; a config or tensor shape mismatch is an error.
    pub fn to_model<T: Real>(&self) -> Result<Model<T>> {
        if self.kind != CheckpointKind::Autoencoder {
            return Err(Error::ShapeConflict("checkpoint holds a classifier, not an autoencoder".into()));
        }
        let mut m = Model::zeros(&self.config)?;
        load_into(&mut m, &self.params)?;
        Ok(m)
    }

    pub fn to_classifier<T: Real>(&self) -> Result<Classifier<T>> {
        let CheckpointKind::Classifier { classes } = self.kind else {
            return Err(Error::ShapeConflict("checkpoint holds an autoencoder, not a classifier".into()));
        };
        let mut c = Classifier::zeros(&self.config, classes)?;
        load_into(&mut c, &self.params)?;
        Ok(c)
    }

    /// Copies the parameters into an existing network of the same shape.
    pub fn load_params<T: Real, P: ParamSet<T>>(&self, into: &mut P) -> Result<()> {
        load_into(into, &self.params)
    }

    fn metadata(&self) -> String {
        let mut s = self.config.to_kv();
        match self.kind {
            CheckpointKind::Autoencoder => s.push_str("kind=autoencoder\n"),
            CheckpointKind::Classifier { classes } => s.push_str(&format!("kind=classifier\nclasses={classes}\n")),
        }
        s.push_str(&format!("step={}\nseed={}\nmoments={}\n", self.step, self.seed, !self.adam_m.is_empty()));
        for (k, v) in &self.extra {
            s.push_str(&format!("extra.{k}={v}\n"));
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.metadata();
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC.to_le_bytes());
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        let all: Vec<&Vec<f64>> = self.params.iter().chain(&self.adam_m).chain(&self.adam_v).collect();
        out.extend_from_slice(&(all.len() as u32).to_le_bytes());
        for t in all {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            t.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.u32().map_err(|_| Error::BadMagic(0))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let meta_len = r.u64()? as usize;
        let meta =
            std::str::from_utf8(r.take(meta_len)?).map_err(|_| Error::Corrupt("metadata is not UTF-8".into()))?;
        let map = parse_kv(meta)?;
        let config = ModelConfig::from_kv(meta, &ModelConfig::full())?;
        let get = |k: &str| map.get(k).ok_or_else(|| Error::Corrupt(format!("metadata lacks `{k}`")));
        let num = |k: &str| get(k)?.parse::<u64>().map_err(|_| Error::Corrupt(format!("bad `{k}`")));
        let kind = match get("kind")?.as_str() {
            "autoencoder" => CheckpointKind::Autoencoder,
            "classifier" => CheckpointKind::Classifier { classes: num("classes")? as usize },
            other => return Err(Error::Corrupt(format!("unknown kind `{other}`"))),
        };
        let moments = get("moments")? == "true";
        let extra =
            map.iter().filter_map(|(k, v)| k.strip_prefix("extra.").map(|k| (k.to_string(), v.clone()))).collect();

        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = r.u64()? as usize;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("tensor too large".into()))?)?;
            tensors.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<_>>());
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let (params, adam_m, adam_v) = if moments {
            if count % 3 != 0 {
                return Err(Error::Corrupt("moment tensors do not match parameters".into()));
            }
            let k = count / 3;
            let v = tensors.split_off(2 * k);
            let m = tensors.split_off(k);
            (tensors, m, v)
        } else {
            (tensors, Vec::new(), Vec::new())
        };
        Ok(Self { kind, config, params, adam_m, adam_v, step: num("step")?, seed: num("seed")?, extra })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
