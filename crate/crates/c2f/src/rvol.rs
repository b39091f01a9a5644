//! RVOL: the native volume and mask file.
//!
//! Little-endian layout: `"RVOL"`, version `u32 = 1`, dims `u32 × 3` (depth, rows,
//! cols), spacing `f32 × 3` in mm, dtype `u8` (0 = f32 intensity, 1 = u8 mask),
//! row-major payload, then a CRC32 of every preceding byte.

use std::fs;
use std::path::Path;

use c2f_core::volume::{Dims3, Grid, Mask, Spacing, Volume};

pub const MAGIC: &[u8; 4] = b"RVOL";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 12 + 1;

#[derive(Debug, thiserror::Error)]
pub enum RvolError {
    #[error("not an RVOL file (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported RVOL version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("truncated header: {0} bytes")]
    TruncatedHeader(usize),
    #[error("file length {found} does not match header ({expected} bytes expected)")]
    Length { expected: usize, found: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("expected a {expected} file, found a {found} file")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid payload: {0}")]
    Payload(#[from] c2f_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Contents of an RVOL file.
#[derive(Clone, Debug, PartialEq)]
pub enum RvolData {
    Volume(Volume),
    Mask(Mask),
}

impl RvolData {
    fn kind(&self) -> &'static str {
        match self {
            RvolData::Volume(_) => "volume",
            RvolData::Mask(_) => "mask",
        }
    }
}

fn header(out: &mut Vec<u8>, dims: Dims3, spacing: Spacing, dtype: u8) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in dims.as_array() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for s in [spacing.d, spacing.h, spacing.w] {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.push(dtype);
}

fn seal(mut out: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn encode_volume(vol: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * vol.data().len() + 4);
    header(&mut out, vol.dims(), vol.spacing(), 0);
    for v in vol.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    seal(out)
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mask.data().len() + 4);
    header(&mut out, mask.dims(), mask.spacing(), 1);
    out.extend_from_slice(mask.data());
    seal(out)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<RvolData, RvolError> {
    if bytes.len() < 4 {
        return Err(RvolError::TruncatedHeader(bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err(RvolError::BadMagic(bytes[..4].try_into().unwrap()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(RvolError::TruncatedHeader(bytes.len()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(RvolError::UnsupportedVersion(version));
    }
    let dims = Dims3::new(
        u32_at(bytes, 8) as usize,
        u32_at(bytes, 12) as usize,
        u32_at(bytes, 16) as usize,
    );
    let spacing = Spacing::new(f32_at(bytes, 20), f32_at(bytes, 24), f32_at(bytes, 28))?;
    let dtype = bytes[32];
    let width = match dtype {
        0 => 4,
        1 => 1,
        d => return Err(RvolError::UnknownDtype(d)),
    };
    let expected = dims
        .len()
        .checked_mul(width)
        .and_then(|n| n.checked_add(HEADER_LEN + 4))
        .unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(RvolError::Length {
            expected,
            found: bytes.len(),
        });
    }
    let body = &bytes[..expected - 4];
    let stored = u32_at(bytes, expected - 4);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(RvolError::Checksum { stored, computed });
    }
    let payload = &body[HEADER_LEN..];
    Ok(match dtype {
        0 => RvolData::Volume(Grid::new(
            dims,
            spacing,
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )?),
        _ => RvolData::Mask(Grid::new(dims, spacing, payload.to_vec())?),
    })
}

pub fn read(path: &Path) -> Result<RvolData, RvolError> {
    decode(&fs::read(path)?)
}

pub fn read_volume(path: &Path) -> Result<Volume, RvolError> {
    match read(path)? {
        RvolData::Volume(v) => Ok(v),
        other => Err(RvolError::WrongKind {
            expected: "volume",
            found: other.kind(),
        }),
    }
}

pub fn read_mask(path: &Path) -> Result<Mask, RvolError> {
    match read(path)? {
        RvolData::Mask(m) => Ok(m),
        other => Err(RvolError::WrongKind {
            expected: "mask",
            found: other.kind(),
        }),
    }
}

pub fn write_volume(vol: &Volume, path: &Path) -> Result<(), RvolError> {
    Ok(fs::write(path, encode_volume(vol))?)
}

pub fn write_mask(mask: &Mask, path: &Path) -> Result<(), RvolError> {
    Ok(fs::write(path, encode_mask(mask))?)
}
