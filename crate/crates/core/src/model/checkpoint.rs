//! Binary checkpoint container.
//!
//! ```text
//! "CTN1" | u16 version
//! config:  u32 renum_ct | u32 image_size | u32 n_stages | u32 x n_stages
//!          | u32 se_reduction | u32 tokens | u32 heads | f64 mlp_ratio | u32 classes
//! u32 parameter count, then per parameter in name order:
//!          u32 name_len | name (UTF-8) | u32 rank | u32 x rank extents | f32 x numel
//! u32 CRC32 of every preceding byte
//! ```
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::config::ModelConfig;
use super::params::ModelParams;

pub const CKPT_MAGIC: &[u8; 4] = b"CTN1";
pub const CKPT_VERSION: u16 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(params: &ModelParams<f32>) -> Vec<u8> {
    let cfg = &params.config;
    let mut buf = Vec::with_capacity(64 + 4 * params.num_scalars());
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    put_u32(&mut buf, cfg.renum_ct);
    put_u32(&mut buf, cfg.image_size);
    put_u32(&mut buf, cfg.stage_channels.len());
    for &c in &cfg.stage_channels {
        put_u32(&mut buf, c);
    }
    put_u32(&mut buf, cfg.se_reduction);
    put_u32(&mut buf, cfg.tokens);
    put_u32(&mut buf, cfg.heads);
    buf.extend_from_slice(&cfg.mlp_ratio.to_le_bytes());
    put_u32(&mut buf, cfg.classes);

    put_u32(&mut buf, params.len());
    for (name, t) in params.iter() {
        put_u32(&mut buf, name.len());
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.rank());
        for &e in t.shape() {
            put_u32(&mut buf, e);
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptHeader("checkpoint truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>> {
    if bytes.len() < 10 || &bytes[..4] != CKPT_MAGIC {
        return Err(Error::CorruptHeader("missing CTN1 magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != CKPT_VERSION {
        return Err(Error::CorruptHeader(format!(
            "unsupported checkpoint version {version}"
        )));
    }

    let mut r = Reader {
        bytes: body,
        pos: 6,
    };
    let renum_ct = r.u32()?;
    let image_size = r.u32()?;
    let n_stages = r.u32()?;
    if n_stages > 64 {
        return Err(Error::CorruptHeader(format!("{n_stages} stages")));
    }
    let stage_channels = (0..n_stages).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let config = ModelConfig {
        renum_ct,
        image_size,
        stage_channels,
        se_reduction: r.u32()?,
        tokens: r.u32()?,
        heads: r.u32()?,
        mlp_ratio: r.f64()?,
        classes: r.u32()?,
    };
    config
        .validate()
        .map_err(|e| Error::CorruptHeader(format!("stored config: {e}")))?;

    let count = r.u32()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::CorruptHeader("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        if rank > 8 {
            return Err(Error::CorruptHeader(format!("`{name}` has rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
        let numel =
            numel.ok_or_else(|| Error::CorruptHeader(format!("`{name}` extents overflow")))?;
        let raw = r.take(
            numel
                .checked_mul(4)
                .ok_or_else(|| Error::CorruptHeader("payload size".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t =
            Tensor::new(shape, data).map_err(|e| Error::CorruptHeader(format!("`{name}`: {e}")))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(Error::CorruptHeader(format!(
                "duplicate parameter `{name}`"
            )));
        }
    }
    if r.pos != body.len() {
        return Err(Error::CorruptHeader(format!(
            "{} trailing bytes",
            body.len() - r.pos
        )));
    }
    ModelParams::from_tensors(config, tensors).map_err(|e| Error::CorruptHeader(e.to_string()))
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
