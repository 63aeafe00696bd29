//! Checkpoint file format (all integers u32 little-endian):
//!
//! ```text
//! magic        8 bytes "THPCKPT\0"
//! version      u32 = 1
//! header_len   u32, then header_len bytes of UTF-8 key=value text:
//!              model.* keys of the configuration plus `seed`
//! tensor_count u32
//! per tensor:  name_len u32, name bytes (UTF-8),
//!              ndim u32, ndim dims (u32 each),
//!              product(dims) f32 values, little-endian, row-major
//! ```
//!
//! Tensors appear in the model's parameter order. Values are always stored
//! as f32.

use std::path::Path;

use super::{ModelConfig, Param, TransHPModel};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::numerics::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"THPCKPT\0";
const VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(model: &TransHPModel<T>) -> Vec<u8> {
    let mut header = model.config().to_kv("model.");
    header.set("seed", model.seed());
    let header = header.to_text();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(&mut out, VERSION as usize);
    put(&mut out, header.len());
    out.extend_from_slice(header.as_bytes());
    put(&mut out, model.params().len());
    for p in model.params() {
        put(&mut out, p.name.len());
        out.extend_from_slice(p.name.as_bytes());
        put(&mut out, p.value.shape().len());
        for &d in p.value.shape() {
            put(&mut out, d);
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "checkpoint truncated: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn utf8(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?).map_err(|e| Error::Format(format!("checkpoint text: {e}")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TransHPModel<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u32()?;
    let header = KvMap::parse(r.utf8(len)?)?;
    let config = ModelConfig::from_kv(&header, "model.")?;
    let seed: u64 = header.required("seed")?;
    let count = r.u32()?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u32()?;
        let name = r.utf8(n)?.to_string();
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let data = r
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(Param {
            name,
            value: Tensor::new(shape, data)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    TransHPModel::with_params(config, seed, params)
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &TransHPModel<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TransHPModel<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::LabelHierarchy;
    use crate::model::presets;

    #[test]
    fn round_trip() {
        let h = LabelHierarchy::uniform(3, 2).unwrap();
        let m = TransHPModel::<f32>::assemble(presets::tiny_model(6, 3), &h, 4).unwrap();
        let bytes = encode_checkpoint(&m);
        assert_eq!(&bytes[..8], b"THPCKPT\0");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn rejects_damage() {
        let h = LabelHierarchy::uniform(3, 2).unwrap();
        let m = TransHPModel::<f32>::assemble(presets::tiny_model(6, 3), &h, 4).unwrap();
        let bytes = encode_checkpoint(&m);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 2]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut bad = bytes;
        bad[8] = 9;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));
    }
}
