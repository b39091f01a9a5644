//! Read-only NIfTI-1 support for single-file (`n+1`) images, optionally gzipped.
//!
//! Stored axes are (i, j, k) with i varying fastest. One of them becomes depth,
//! by default k; the other two keep their stored order, slower axis as rows.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;

use c2f_core::volume::{Dims3, Grid, Mask, Spacing, Volume};
use flate2::read::GzDecoder;

pub const HEADER_SIZE: usize = 348;
/// Stored axis used as depth unless configured otherwise: the slowest one.
pub const DEFAULT_DEPTH_AXIS: usize = 2;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

#[derive(Debug, thiserror::Error)]
pub enum NiftiError {
    #[error("file too short for a NIfTI-1 header ({0} bytes)")]
    Short(usize),
    #[error("sizeof_hdr is not 348 in either byte order")]
    NotNifti,
    #[error("unsupported NIfTI file: {reason}\n{header}")]
    Unsupported { reason: String, header: NiftiHeader },
    #[error("image data ends at byte {found}, header needs {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("depth axis must be 0, 1 or 2, got {0}")]
    DepthAxis(usize),
    #[error(transparent)]
    Core(#[from] c2f_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The header fields this reader uses.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub little_endian: bool,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
}

impl fmt::Display for NiftiHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  magic      {:?}", String::from_utf8_lossy(&self.magic))?;
        writeln!(
            f,
            "  byte order {}",
            if self.little_endian { "little" } else { "big" }
        )?;
        writeln!(f, "  dim        {:?}", self.dim)?;
        writeln!(f, "  datatype   {} (bitpix {})", self.datatype, self.bitpix)?;
        writeln!(f, "  pixdim     {:?}", self.pixdim)?;
        writeln!(f, "  vox_offset {}", self.vox_offset)?;
        write!(
            f,
            "  scl        slope {} inter {}",
            self.scl_slope, self.scl_inter
        )
    }
}

struct Reader<'a> {
    b: &'a [u8],
    le: bool,
}

impl Reader<'_> {
    fn i16(&self, at: usize) -> i16 {
        let v = [self.b[at], self.b[at + 1]];
        if self.le {
            i16::from_le_bytes(v)
        } else {
            i16::from_be_bytes(v)
        }
    }

    fn i32(&self, at: usize) -> i32 {
        let v = self.b[at..at + 4].try_into().unwrap();
        if self.le {
            i32::from_le_bytes(v)
        } else {
            i32::from_be_bytes(v)
        }
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_bits(self.i32(at) as u32)
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::Short(bytes.len()));
    }
    let le = if i32::from_le_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32 {
        true
    } else if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32 {
        false
    } else {
        return Err(NiftiError::NotNifti);
    };
    let r = Reader { b: bytes, le };
    Ok(NiftiHeader {
        little_endian: le,
        dim: std::array::from_fn(|i| r.i16(40 + 2 * i)),
        datatype: r.i16(70),
        bitpix: r.i16(72),
        pixdim: std::array::from_fn(|i| r.f32(76 + 4 * i)),
        vox_offset: r.f32(108),
        scl_slope: r.f32(112),
        scl_inter: r.f32(116),
        magic: bytes[344..348].try_into().unwrap(),
    })
}

fn unsupported(reason: impl Into<String>, header: &NiftiHeader) -> NiftiError {
    NiftiError::Unsupported {
        reason: reason.into(),
        header: header.clone(),
    }
}

/// Undoes gzip compression when the gzip magic is present.
pub fn inflate(bytes: Vec<u8>) -> Result<Vec<u8>, NiftiError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Decodes an in-memory (already inflated) NIfTI-1 image into a volume.
pub fn decode(bytes: &[u8], depth_axis: usize) -> Result<(NiftiHeader, Volume), NiftiError> {
    if depth_axis > 2 {
        return Err(NiftiError::DepthAxis(depth_axis));
    }
    let h = parse_header(bytes)?;
    if &h.magic != b"n+1\0" {
        return Err(unsupported(
            "only single-file images (magic \"n+1\") are read",
            &h,
        ));
    }
    let ndim = h.dim[0];
    if !(3..=7).contains(&ndim) || h.dim[4..=ndim as usize].iter().any(|&d| d != 1) {
        return Err(unsupported(
            format!("expected a single 3D frame, dim[0] = {ndim}"),
            &h,
        ));
    }
    if h.dim[1..=3].iter().any(|&d| d < 1) {
        return Err(unsupported("non-positive spatial dims", &h));
    }
    let (width, bitpix) = match h.datatype {
        DT_UINT8 => (1, 8),
        DT_INT16 => (2, 16),
        DT_FLOAT32 => (4, 32),
        other => {
            return Err(unsupported(
                format!("datatype {other} is not uint8, int16 or float32"),
                &h,
            ))
        }
    };
    if h.bitpix != bitpix {
        return Err(unsupported(
            format!("bitpix {} does not match the datatype", h.bitpix),
            &h,
        ));
    }
    let offset = h.vox_offset;
    if !(offset.is_finite() && offset >= HEADER_SIZE as f32) {
        return Err(unsupported(
            format!("vox_offset {offset} precedes the end of the header"),
            &h,
        ));
    }
    let offset = offset as usize;
    let n = [h.dim[1], h.dim[2], h.dim[3]].map(|d| d as usize);
    let count = n[0] * n[1] * n[2];
    let end = offset + count * width;
    if bytes.len() < end {
        return Err(NiftiError::Truncated {
            expected: end,
            found: bytes.len(),
        });
    }
    let r = Reader {
        b: bytes,
        le: h.little_endian,
    };
    let raw: Vec<f32> = (0..count)
        .map(|i| {
            let at = offset + i * width;
            match h.datatype {
                DT_UINT8 => bytes[at] as f32,
                DT_INT16 => r.i16(at) as f32,
                _ => r.f32(at),
            }
        })
        .collect();
    let (slope, inter) = (h.scl_slope, h.scl_inter);
    let scale = slope != 0.0 && slope.is_finite() && inter.is_finite();

    // Output axes (depth, rows, cols) as stored axis numbers.
    let axes = match depth_axis {
        0 => [0, 2, 1],
        1 => [1, 2, 0],
        _ => [2, 1, 0],
    };
    let dims = Dims3::new(n[axes[0]], n[axes[1]], n[axes[2]]);
    let px = |a: usize| h.pixdim[a + 1].abs();
    let spacing = Spacing::new(px(axes[0]), px(axes[1]), px(axes[2]))
        .map_err(|_| unsupported("pixdim[1..3] must be non-zero and finite", &h))?;
    let stride = [1, n[0], n[0] * n[1]];
    let mut data = Vec::with_capacity(count);
    for d in 0..dims.depth {
        for row in 0..dims.rows {
            for col in 0..dims.cols {
                let v = raw[d * stride[axes[0]] + row * stride[axes[1]] + col * stride[axes[2]]];
                data.push(if scale { v * slope + inter } else { v });
            }
        }
    }
    Ok((h, Grid::new(dims, spacing, data)?))
}

pub fn read_nifti(path: &Path, depth_axis: usize) -> Result<Volume, NiftiError> {
    Ok(decode(&inflate(fs::read(path)?)?, depth_axis)?.1)
}

/// Reads a label image; every non-zero value is foreground.
pub fn read_nifti_mask(path: &Path, depth_axis: usize) -> Result<Mask, NiftiError> {
    Ok(read_nifti(path, depth_axis)?.map(|v| u8::from(v != 0.0))?)
}
