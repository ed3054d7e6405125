use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolumeKind {
    Image,
    Mask,
}

/// A 3D scalar grid `[H, W, D]`; slices are taken along `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub id: String,
    pub kind: VolumeKind,
    voxels: Tensor<f32>,
}

impl Volume {
    pub fn new(id: impl Into<String>, kind: VolumeKind, voxels: Tensor<f32>) -> Result<Self> {
        if voxels.rank() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "volume must be [H, W, D], got {:?}",
                voxels.shape()
            )));
        }
        if kind == VolumeKind::Mask {
            check_binary(voxels.data())?;
        }
        Ok(Self {
            id: id.into(),
            kind,
            voxels,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.voxels.shape();
        (s[0], s[1], s[2])
    }

    pub fn depth(&self) -> usize {
        self.voxels.shape()[2]
    }

    pub fn voxels(&self) -> &Tensor<f32> {
        &self.voxels
    }

    pub fn into_voxels(self) -> Tensor<f32> {
        self.voxels
    }

    /// Reinterprets an image as a label mask; every voxel must be 0 or 1.
    pub fn into_mask(self) -> Result<Self> {
        check_binary(self.voxels.data())?;
        Ok(Self {
            kind: VolumeKind::Mask,
            ..self
        })
    }

    /// Slice `k` along the depth axis as an `[H, W]` tensor.
    pub fn slice(&self, k: usize) -> Result<Tensor<f32>> {
        let (h, w, d) = self.dims();
        if k >= d {
            return Err(Error::InvalidInput(format!("slice {k} out of range 0..{d}")));
        }
        let data = self.voxels.data().iter().skip(k).step_by(d).copied().collect();
        Tensor::from_vec(&[h, w], data)
    }

    /// Assembles `[H, W]` slices back into a volume.
    pub fn from_slices(id: impl Into<String>, kind: VolumeKind, slices: &[Tensor<f32>]) -> Result<Self> {
        let first = slices.first().ok_or(Error::EmptyDataset)?;
        let [h, w] = *first.shape() else {
            return Err(Error::ShapeMismatch(format!("slice must be [H, W], got {:?}", first.shape())));
        };
        if slices.iter().any(|s| s.shape() != first.shape()) {
            return Err(Error::ShapeMismatch("slices differ in shape".into()));
        }
        let d = slices.len();
        let mut data = Vec::with_capacity(h * w * d);
        for px in 0..h * w {
            data.extend(slices.iter().map(|s| s.data()[px]));
        }
        Self::new(id, kind, Tensor::from_vec(&[h, w, d], data)?)
    }
}

fn check_binary(values: &[f32]) -> Result<()> {
    match values.iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(v) => Err(Error::InvalidInput(format!("mask contains value {v}, expected only 0 and 1"))),
        None => Ok(()),
    }
}

/// Per-volume min-max rescale into `[0, 1]`; constant volumes become all zeros.
pub fn normalize_volume(v: &Volume) -> Result<Volume> {
    if v.kind != VolumeKind::Image {
        return Err(Error::InvalidInput(format!("cannot normalize mask volume {}", v.id)));
    }
    let (lo, hi) = v
        .voxels
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    let voxels = if range > 0.0 {
        v.voxels.map(|x| (x - lo) / range)
    } else {
        v.voxels.zeros_like()
    };
    Ok(Volume {
        voxels,
        ..v.clone()
    })
}
