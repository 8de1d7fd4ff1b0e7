//! Parameter checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TEVW"  u16 version  u32 json_len  json architecture descriptor
//! u32 record_count
//! record_count × { u32 name_len  name  u32 rank  rank × u32 dim  f32 payload }
//! ```

use std::fs;
use std::path::Path;

use crate::binio::{put_f32s, put_u16, put_u32, ByteReader, FormatError};
use crate::error::{NumericsError, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TEVW";
pub const CHECKPOINT_VERSION: u16 = 1;

impl From<FormatError> for NumericsError {
    fn from(e: FormatError) -> Self {
        NumericsError::Checkpoint {
            offset: e.offset,
            msg: e.msg,
        }
    }
}

/// A parameter set together with the architecture it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: serde_json::Value,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new(architecture: serde_json::Value, params: ParamSet) -> Self {
        Checkpoint { architecture, params }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.architecture)
            .map_err(|e| NumericsError::Training(format!("architecture descriptor: {e}")))?;
        let mut out = Vec::with_capacity(64 + json.len() + self.params.num_elements() * 4);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u16(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, json.len() as u32);
        out.extend_from_slice(&json);
        put_u32(&mut out, self.params.len() as u32);
        for (name, t) in self.params.iter() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank() as u32);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            put_f32s(&mut out, t.data());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        let version_at = r.offset();
        let version = r.u16("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(NumericsError::Checkpoint {
                offset: version_at,
                msg: format!("unsupported version {version}"),
            });
        }
        let json_len = r.u32("descriptor length")? as usize;
        let json_at = r.offset();
        let json = r.bytes(json_len, "architecture descriptor")?;
        let architecture = serde_json::from_slice(json).map_err(|e| NumericsError::Checkpoint {
            offset: json_at,
            msg: format!("architecture descriptor: {e}"),
        })?;
        let count = r.u32("record count")?;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name_at = r.offset();
            let name = std::str::from_utf8(r.bytes(name_len, "parameter name")?)
                .map_err(|_| NumericsError::Checkpoint {
                    offset: name_at,
                    msg: "parameter name is not UTF-8".into(),
                })?
                .to_string();
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| r.error(format!("shape {shape:?} of `{name}` overflows")))?;
            let data = r.f32_vec(numel, "parameter payload")?;
            params.insert(name, Tensor::new(shape, data)?);
        }
        r.expect_end()?;
        Ok(Checkpoint { architecture, params })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp-write");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
