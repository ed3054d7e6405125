//! Volumes, file formats, 2.5D slice stacks, splits and synthetic data.

mod io;
mod nifti;
mod raw;
mod slices;
mod split;
mod synthetic;
mod volume;

pub use io::{
    dataset_dirs, list_cases, load_case, read_mask, read_volume, volume_id, write_mask, write_volume, CaseFiles,
    RAW_EXT,
};
pub use nifti::{decode_nifti, DT_FLOAT32, DT_INT16};
pub use raw::{decode_raw, encode_raw};
pub use slices::{extract_slice_stack, neighbor_indices, stack_pixels, volume_stacks, SliceStack};
pub use split::{make_dataset_split, scale_split, DatasetSplit};
pub use synthetic::gen_synthetic;
pub use volume::{normalize_volume, Volume, VolumeKind};
