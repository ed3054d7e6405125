//! Self-describing raw volume format.
//!
//! ```text
//! "HVOL1"          5 bytes
//! kind             u8 (0 = image, 1 = mask)
//! H, W, D          u32 little-endian each
//! voxels           H·W·D f32 little-endian, row-major (H outer, D inner)
//! ```

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::volume::{Volume, VolumeKind};

pub const MAGIC: &[u8; 5] = b"HVOL1";
const HEADER: usize = 5 + 1 + 12;

pub fn encode_raw(v: &Volume) -> Vec<u8> {
    let (h, w, d) = v.dims();
    let mut out = Vec::with_capacity(HEADER + 4 * h * w * d);
    out.extend_from_slice(MAGIC);
    out.push(match v.kind {
        VolumeKind::Image => 0,
        VolumeKind::Mask => 1,
    });
    for dim in [h, w, d] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for x in v.voxels().data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8], id: &str) -> Result<Volume> {
    if bytes.len() < HEADER {
        return Err(Error::Truncated(format!("{id}: raw header needs {HEADER} bytes")));
    }
    if &bytes[..5] != MAGIC {
        return Err(Error::UnsupportedFormat(format!("{id}: missing HVOL1 magic")));
    }
    let kind = match bytes[5] {
        0 => VolumeKind::Image,
        1 => VolumeKind::Mask,
        k => return Err(Error::UnsupportedFormat(format!("{id}: unknown volume kind {k}"))),
    };
    let dim = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
    let dims = [dim(0), dim(1), dim(2)];
    let count = dims.iter().product::<usize>();
    let body = &bytes[HEADER..];
    if body.len() < 4 * count {
        return Err(Error::Truncated(format!(
            "{id}: expected {} voxel bytes, found {}",
            4 * count,
            body.len()
        )));
    }
    if body.len() > 4 * count {
        return Err(Error::UnsupportedFormat(format!("{id}: trailing bytes after voxel data")));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::new(id, kind, Tensor::from_vec(&dims, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let v = Volume::new(
            "x",
            VolumeKind::Mask,
            Tensor::from_vec(&[1, 2, 1], vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let bytes = encode_raw(&v);
        let mut want = b"HVOL1\x01".to_vec();
        want.extend([1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        want.extend(0.0f32.to_le_bytes());
        want.extend(1.0f32.to_le_bytes());
        assert_eq!(bytes, want);
        assert_eq!(decode_raw(&bytes, "x").unwrap(), v);
    }

    #[test]
    fn truncation_and_bad_magic() {
        let v = Volume::new("x", VolumeKind::Image, Tensor::zeros(&[2, 2, 2]).unwrap()).unwrap();
        let bytes = encode_raw(&v);
        assert!(matches!(decode_raw(&bytes[..bytes.len() - 1], "x"), Err(Error::Truncated(_))));
        assert!(matches!(decode_raw(&bytes[..4], "x"), Err(Error::Truncated(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_raw(&bad, "x"), Err(Error::UnsupportedFormat(_))));
    }
}
