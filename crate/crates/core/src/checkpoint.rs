//! Self-describing binary container for model weights.
//!
//! ```text
//! magic   8 bytes  "SQDRCKPT"
//! header  u64 LE length, then UTF-8 JSON (format version, kind, metadata,
//!         array names and lengths)
//! data    f32 LE values of every array, in header order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 8] = b"SQDRCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, Vec<f32>)>,
}

impl Container {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, v)| ArrayEntry {
                    name: name.clone(),
                    len: v.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(16 + json.len() + 4 * self.arrays.iter().map(|a| a.1.len()).sum::<usize>());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, values) in &self.arrays {
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).at(dir)?;
        }
        let mut f = std::fs::File::create(path).at(path)?;
        f.write_all(&buf).at(path)
    }

    pub fn load(path: &Path) -> Result<Container> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .at(path)?;
        let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + header_len)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(&format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let mut offset = 16 + header_len;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for entry in header.arrays {
            let end = offset + 4 * entry.len;
            let raw = bytes.get(offset..end).ok_or_else(|| bad("truncated data"))?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push((entry.name, values));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after data"));
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Copy stored arrays into `targets`, matching names and lengths exactly.
    pub fn restore<'a>(&self, targets: impl IntoIterator<Item = (String, &'a mut Vec<f32>)>) -> Result<()> {
        let targets: Vec<_> = targets.into_iter().collect();
        if targets.len() != self.arrays.len() {
            return Err(Error::Checkpoint(format!(
                "array count mismatch: model has {}, checkpoint has {}",
                targets.len(),
                self.arrays.len()
            )));
        }
        for ((name, dst), (src_name, src)) in targets.into_iter().zip(&self.arrays) {
            if &name != src_name || dst.len() != src.len() {
                return Err(Error::Checkpoint(format!(
                    "array mismatch: model {name}[{}], checkpoint {src_name}[{}]",
                    dst.len(),
                    src.len()
                )));
            }
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}
