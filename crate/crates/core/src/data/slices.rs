use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::volume::{Volume, VolumeKind};

/// One 2.5D training pair: `ch` neighboring slices as channels plus the
/// center slice's label.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceStack {
    /// `[H, W, CH]`
    pub pixels: Tensor<f32>,
    /// `[H, W]` of {0, 1}
    pub label: Tensor<f32>,
    pub volume_id: String,
    pub center: usize,
}

/// Slice indices feeding the channels of the stack centered at `center`,
/// clamped to `[0, depth - 1]`.
pub fn neighbor_indices(center: usize, ch: usize, depth: usize) -> Vec<usize> {
    let r = (ch / 2) as isize;
    (-r..=r)
        .map(|o| (center as isize + o).clamp(0, depth as isize - 1) as usize)
        .collect()
}

/// The `[H, W, ch]` network input centered at slice `center`, without a label.
pub fn stack_pixels(image: &Volume, center: usize, ch: usize) -> Result<Tensor<f32>> {
    if ch % 2 == 0 {
        return Err(Error::InvalidConfig(format!("channel count {ch} must be odd")));
    }
    let (h, w, d) = image.dims();
    if center >= d {
        return Err(Error::InvalidInput(format!("center slice {center} out of range 0..{d}")));
    }
    let idx = neighbor_indices(center, ch, d);
    let mut pixels = Vec::with_capacity(h * w * ch);
    for column in image.voxels().data().chunks_exact(d) {
        pixels.extend(idx.iter().map(|&k| column[k]));
    }
    Tensor::from_vec(&[h, w, ch], pixels)
}

pub fn extract_slice_stack(image: &Volume, mask: &Volume, center: usize, ch: usize) -> Result<SliceStack> {
    if image.kind != VolumeKind::Image || mask.kind != VolumeKind::Mask {
        return Err(Error::InvalidInput("expected an image volume and a mask volume".into()));
    }
    if image.dims() != mask.dims() {
        return Err(Error::ShapeMismatch(format!(
            "image {} dims {:?} vs mask {} dims {:?}",
            image.id,
            image.dims(),
            mask.id,
            mask.dims()
        )));
    }
    Ok(SliceStack {
        pixels: stack_pixels(image, center, ch)?,
        label: mask.slice(center)?,
        volume_id: image.id.clone(),
        center,
    })
}

/// Every slice of a volume pair, in depth order.
pub fn volume_stacks(image: &Volume, mask: &Volume, ch: usize) -> Result<Vec<SliceStack>> {
    (0..image.depth())
        .map(|k| extract_slice_stack(image, mask, k, ch))
        .collect()
}
