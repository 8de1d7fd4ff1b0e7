//! `.tevd` corpus files.
//!
//! ```text
//! "TEVD"  u16 version  u32 json_len  json header
//! u32 sequence_count
//! sequence_count × { u8 label  u32 frame_count  f32 frames[frame][channel][row][col] }
//! ```
//!
//! Label 255 marks an unlabelled sequence.

use std::path::Path;

use tev_numerics::binio::{put_f32s, put_u16, put_u32, ByteReader};

use super::corpus::{Corpus, CorpusHeader};
use super::EventClass;
use crate::error::{Result, TevError};
use crate::field::{DisplacementFrame, TactileSequence};

pub const CORPUS_MAGIC: &[u8; 4] = b"TEVD";
pub const CORPUS_VERSION: u16 = 1;
const UNLABELLED: u8 = u8::MAX;

impl Corpus {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let json = serde_json::to_vec(h).map_err(|e| TevError::Config(format!("corpus header: {e}")))?;
        let frame_len = h.channels * h.rows * h.cols;
        let payload: usize = self.sequences.iter().map(|s| 5 + s.len() * frame_len * 4).sum();
        let mut out = Vec::with_capacity(14 + json.len() + payload);
        out.extend_from_slice(CORPUS_MAGIC);
        put_u16(&mut out, CORPUS_VERSION);
        put_u32(&mut out, json.len() as u32);
        out.extend_from_slice(&json);
        put_u32(&mut out, self.sequences.len() as u32);
        for (i, s) in self.sequences.iter().enumerate() {
            out.push(s.label.map_or(UNLABELLED, |c| c.index() as u8));
            put_u32(&mut out, s.len() as u32);
            for f in &s.frames {
                if f.rows() != h.rows || f.cols() != h.cols {
                    return Err(TevError::Shape(format!(
                        "sequence {i} has a {}x{} frame, header says {}x{}",
                        f.rows(),
                        f.cols(),
                        h.rows,
                        h.cols
                    )));
                }
                put_f32s(&mut out, f.as_slice());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(CORPUS_MAGIC)?;
        let version_at = r.offset();
        let version = r.u16("version")?;
        if version != CORPUS_VERSION {
            return Err(TevError::Format {
                offset: version_at,
                msg: format!("unsupported version {version}"),
            });
        }
        let json_len = r.u32("header length")? as usize;
        let json_at = r.offset();
        let header: CorpusHeader =
            serde_json::from_slice(r.bytes(json_len, "header")?).map_err(|e| TevError::Format {
                offset: json_at,
                msg: format!("header: {e}"),
            })?;
        if header.channels != 2 {
            return Err(TevError::Format {
                offset: json_at,
                msg: format!("expected 2 channels, header says {}", header.channels),
            });
        }
        let frame_len = header.channels * header.rows * header.cols;
        let count = r.u32("sequence count")? as usize;
        let mut sequences = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let label_at = r.offset();
            let label = match r.u8("label")? {
                UNLABELLED => None,
                i => Some(EventClass::from_index(i as usize).ok_or_else(|| TevError::Format {
                    offset: label_at,
                    msg: format!("label index {i} out of range"),
                })?),
            };
            let frames = r.u32("frame count")? as usize;
            let mut out = Vec::with_capacity(frames.min(1 << 12));
            for _ in 0..frames {
                let data = r.f32_vec(frame_len, "frame payload")?;
                out.push(DisplacementFrame::unflatten(header.rows, header.cols, data)?);
            }
            sequences.push(TactileSequence {
                frames: out,
                sample_rate_hz: header.f_s,
                window_s: header.t_w,
                stride: header.stride,
                label,
            });
        }
        r.expect_end()?;
        Ok(Corpus { header, sequences })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
