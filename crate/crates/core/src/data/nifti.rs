//! Minimal single-file NIfTI-1 reader (`.nii`, optionally gzip-compressed).
//!
//! Supported: 3D volumes (`dim[0] == 3`, or 4 with a singleton fourth axis),
//! datatypes 4 (int16) and 16 (float32), either byte order. Orientation and
//! intensity scaling fields are ignored.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::volume::{Volume, VolumeKind};

pub const HEADER_SIZE: usize = 348;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Header<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Header<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b = self.bytes[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

/// True when the bytes start with a plausible NIfTI-1 `sizeof_hdr`.
pub fn looks_like_nifti(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && detect_endian(bytes).is_some()
}

fn detect_endian(bytes: &[u8]) -> Option<Endian> {
    let raw: [u8; 4] = bytes.get(..4)?.try_into().ok()?;
    if i32::from_le_bytes(raw) == HEADER_SIZE as i32 {
        Some(Endian::Little)
    } else if i32::from_be_bytes(raw) == HEADER_SIZE as i32 {
        Some(Endian::Big)
    } else {
        None
    }
}

/// Parses an uncompressed NIfTI-1 image. Axis `i` (fastest in the file) maps
/// to height, `j` to width, `k` to depth.
pub fn decode_nifti(bytes: &[u8], id: &str, kind: VolumeKind) -> Result<Volume> {
    let endian = detect_endian(bytes)
        .ok_or_else(|| Error::UnsupportedFormat(format!("{id}: not a NIfTI-1 file")))?;
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Truncated(format!("{id}: NIfTI header is {} bytes", bytes.len())));
    }
    let hdr = Header { bytes, endian };
    let dim: Vec<i16> = (0..8).map(|i| hdr.i16(40 + 2 * i)).collect();
    let rank_ok = dim[0] == 3 || (dim[0] == 4 && dim[4] == 1);
    if !rank_ok || dim[1..4].iter().any(|&d| d < 1) {
        return Err(Error::UnsupportedFormat(format!(
            "{id}: expected a 3D volume, header dim = {:?}",
            &dim[..5]
        )));
    }
    let (h, w, d) = (dim[1] as usize, dim[2] as usize, dim[3] as usize);
    let datatype = hdr.i16(70);
    let width = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    let vox_offset = hdr.f32(108);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::UnsupportedFormat(format!("{id}: invalid vox_offset {vox_offset}")));
    }
    let start = vox_offset as usize;
    let count = h * w * d;
    let body = bytes
        .get(start..)
        .filter(|b| b.len() >= count * width)
        .ok_or_else(|| {
            Error::Truncated(format!(
                "{id}: expected {} voxel bytes at offset {start}, file has {}",
                count * width,
                bytes.len()
            ))
        })?;

    let value = |idx: usize| -> f32 {
        let b = &body[idx * width..(idx + 1) * width];
        match (datatype, endian) {
            (DT_INT16, Endian::Little) => f32::from(i16::from_le_bytes([b[0], b[1]])),
            (DT_INT16, Endian::Big) => f32::from(i16::from_be_bytes([b[0], b[1]])),
            (_, Endian::Little) => f32::from_le_bytes(b.try_into().unwrap()),
            (_, Endian::Big) => f32::from_be_bytes(b.try_into().unwrap()),
        }
    };
    let mut data = vec![0.0f32; count];
    for k in 0..d {
        for j in 0..w {
            for i in 0..h {
                data[(i * w + j) * d + k] = value(i + h * (j + w * k));
            }
        }
    }
    Volume::new(id, kind, Tensor::from_vec(&[h, w, d], data)?)
}
