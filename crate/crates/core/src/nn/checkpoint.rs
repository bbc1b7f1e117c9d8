//! Binary model checkpoints.
//!
//! ```text
//! "TFC1"  u32 version (1)
//! u32 tag length, tag bytes            architecture tag
//! u32 x 9                              steps, features, lstm_hidden, conv_filters,
//!                                      kernel, pool, dense_hidden, gan_hidden, noise_dim
//! u32 tensor count, u64 length each    shape table
//! f64 parameters                       tensors in order
//! u32 feature count, f64 x 2 target min/max, f64 x 2 per feature
//! ```
//!
//! All integers and floats little-endian.

use std::path::Path;

use super::data::{MinMax, ScalerPair};
use super::gan::Gan;
use super::model::{Architecture, Model, ModelSpec, Network};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TFC1";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn to_bytes(model: &Model, scalers: &ScalerPair) -> Vec<u8> {
    let spec = model.spec();
    let (steps, features) = model.steps_and_features();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    let tag = spec.arch.as_str().as_bytes();
    put_u32(&mut out, tag.len());
    out.extend_from_slice(tag);
    for v in [
        steps,
        features,
        spec.lstm_hidden,
        spec.conv_filters,
        spec.kernel,
        spec.pool,
        spec.dense_hidden,
        spec.gan_hidden,
        spec.noise_dim,
    ] {
        put_u32(&mut out, v);
    }
    let params = model.params();
    put_u32(&mut out, params.len());
    for p in &params {
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
    }
    for p in &params {
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    put_u32(&mut out, scalers.features.len());
    for s in std::iter::once(&scalers.target).chain(&scalers.features) {
        out.extend_from_slice(&s.min.to_le_bytes());
        out.extend_from_slice(&s.max.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Model, ScalerPair)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let tag_len = cur.u32()?;
    let tag = std::str::from_utf8(cur.take(tag_len)?)
        .map_err(|_| Error::Checkpoint("tag is not utf-8".into()))?;
    let arch: Architecture = tag.parse()?;
    let mut dims = [0usize; 9];
    for d in &mut dims {
        *d = cur.u32()?;
    }
    let [steps, features, lstm_hidden, conv_filters, kernel, pool, dense_hidden, gan_hidden, noise_dim] =
        dims;
    let spec = ModelSpec {
        arch,
        lstm_hidden,
        conv_filters,
        kernel,
        pool,
        dense_hidden,
        gan_hidden,
        noise_dim,
    };
    let mut model = match arch {
        Architecture::Gan => Model::Gan(Gan::new(spec, steps, features, 0)?),
        _ => Model::Network(Network::new(spec, steps, features, 0)?),
    };
    let n_tensors = cur.u32()?;
    let expected: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    if n_tensors != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {n_tensors}",
            expected.len()
        )));
    }
    for (i, &want) in expected.iter().enumerate() {
        let got = cur.u64()?;
        if got != want {
            return Err(Error::Checkpoint(format!(
                "tensor {i}: expected length {want}, found {got}"
            )));
        }
    }
    for p in model.params_mut() {
        for v in p.value.iter_mut() {
            *v = cur.f64()?;
        }
    }
    let n_features = cur.u32()?;
    let mut read = || -> Result<MinMax> {
        Ok(MinMax {
            min: cur.f64()?,
            max: cur.f64()?,
        })
    };
    let target = read()?;
    let features = (0..n_features)
        .map(|_| read())
        .collect::<Result<Vec<_>>>()?;
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    Ok((model, ScalerPair { target, features }))
}

pub fn save(path: &Path, model: &Model, scalers: &ScalerPair) -> Result<()> {
    std::fs::write(path, to_bytes(model, scalers)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Model, ScalerPair)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
