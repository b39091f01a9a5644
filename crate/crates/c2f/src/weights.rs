//! Weight file: `"C2FW"`, version `u32 = 1`, parameter count `u32`, then per
//! parameter a `u16` name length, the UTF-8 name, a `u8` rank, `u32` dims and raw
//! little-endian `f32` data. A CRC32 of all preceding bytes closes the file.

use std::fs;
use std::path::Path;

use c2f_core::nn::{ModelWeights, Param};

pub const MAGIC: &[u8; 4] = b"C2FW";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("not a weight file (magic {0:02x?})")]
    BadMagic(Vec<u8>),
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated at parameter {0}")]
    TruncatedParam(usize),
    #[error("truncated checksum")]
    TruncatedChecksum,
    #[error("{0} trailing bytes after the checksum")]
    Trailing(usize),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("parameter {index}: {detail}")]
    Invalid { index: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(w: &ModelWeights<f32>) -> Result<Vec<u8>, WeightsError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(w.params.len() as u32).to_le_bytes());
    for (index, p) in w.params.iter().enumerate() {
        let invalid = |detail: String| WeightsError::Invalid { index, detail };
        let name = u16::try_from(p.name.len()).map_err(|_| invalid("name too long".into()))?;
        let rank = u8::try_from(p.shape.len()).map_err(|_| invalid("rank too large".into()))?;
        if p.shape.iter().product::<usize>() != p.data.len() {
            return Err(invalid(format!(
                "shape {:?} holds {} values",
                p.shape,
                p.data.len()
            )));
        }
        out.extend_from_slice(&name.to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(rank);
        for &d in &p.shape {
            let d = u32::try_from(d).map_err(|_| invalid(format!("dim {d} too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        let s = self.bytes.get(self.at..end)?;
        self.at = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelWeights<f32>, WeightsError> {
    let mut c = Cursor { bytes, at: 0 };
    let magic = c.take(4).ok_or(WeightsError::TruncatedHeader)?;
    if magic != MAGIC {
        return Err(WeightsError::BadMagic(magic.to_vec()));
    }
    let version = c.u32().ok_or(WeightsError::TruncatedHeader)?;
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let count = c.u32().ok_or(WeightsError::TruncatedHeader)? as usize;
    let mut params = Vec::new();
    for k in 0..count {
        let cut = || WeightsError::TruncatedParam(k);
        let name_len = c.take(2).ok_or_else(cut)?;
        let name_len = u16::from_le_bytes(name_len.try_into().unwrap()) as usize;
        let name = c.take(name_len).ok_or_else(cut)?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| WeightsError::Invalid {
            index: k,
            detail: "name is not UTF-8".into(),
        })?;
        let rank = c.take(1).ok_or_else(cut)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32().ok_or_else(cut)? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(cut)?;
        let raw = c.take(n).ok_or_else(cut)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        params.push(Param { name, shape, data });
    }
    let body = c.at;
    let stored = c.u32().ok_or(WeightsError::TruncatedChecksum)?;
    if c.at != bytes.len() {
        return Err(WeightsError::Trailing(bytes.len() - c.at));
    }
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(WeightsError::Checksum { stored, computed });
    }
    Ok(ModelWeights { params })
}

pub fn save_weights(w: &ModelWeights<f32>, path: &Path) -> Result<(), WeightsError> {
    Ok(fs::write(path, encode(w)?)?)
}

pub fn load_weights(path: &Path) -> Result<ModelWeights<f32>, WeightsError> {
    decode(&fs::read(path)?)
}
