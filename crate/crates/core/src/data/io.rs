use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use image::GrayImage;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::nifti::{decode_nifti, looks_like_nifti};
use super::raw::{decode_raw, encode_raw, MAGIC};
use super::volume::{Volume, VolumeKind};

pub const RAW_EXT: &str = "hvol";
const VOLUME_EXTS: [&str; 3] = [".hvol", ".nii.gz", ".nii"];

/// Volume id for a file name: the name without its volume extension.
pub fn volume_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    VOLUME_EXTS
        .iter()
        .find_map(|ext| name.strip_suffix(ext))
        .map(str::to_owned)
        .unwrap_or(name)
}

/// Reads a raw-format or NIfTI-1 (optionally gzipped) volume. NIfTI files
/// carry no kind and load as images; see [`Volume::into_mask`].
pub fn read_volume(path: &Path) -> Result<Volume> {
    let mut bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(bytes.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        bytes = out;
    }
    let id = volume_id(path);
    if bytes.starts_with(MAGIC) {
        decode_raw(&bytes, &id)
    } else if looks_like_nifti(&bytes) {
        decode_nifti(&bytes, &id, VolumeKind::Image)
    } else {
        Err(Error::UnsupportedFormat(format!("{}: unrecognized volume format", path.display())))
    }
}

pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    fs::write(path, encode_raw(v)).map_err(|e| Error::io(path, e))
}

/// Writes a `[H, W]` binary mask as 8-bit grayscale (0 → 0, 1 → 255).
pub fn write_mask(mask: &Tensor<f32>, path: &Path) -> Result<()> {
    let [h, w] = *mask.shape() else {
        return Err(Error::ShapeMismatch(format!("mask must be [H, W], got {:?}", mask.shape())));
    };
    let pixels = mask
        .data()
        .iter()
        .map(|&v| match v {
            0.0 => Ok(0u8),
            1.0 => Ok(255u8),
            other => Err(Error::InvalidInput(format!("mask value {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let img = GrayImage::from_raw(w as u32, h as u32, pixels).expect("buffer matches dimensions");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a mask PNG back; only pure black and white are accepted.
pub fn read_mask(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|p| match p {
            0 => Ok(0.0),
            255 => Ok(1.0),
            other => Err(Error::InvalidInput(format!("{}: gray level {other} in mask", path.display()))),
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_vec(&[h as usize, w as usize], data)
}

/// Image and label directories of a dataset root: `images/` + `labels/`, or
/// the decathlon layout `imagesTr/` + `labelsTr/`.
pub fn dataset_dirs(root: &Path) -> Result<(PathBuf, PathBuf)> {
    for (img, lbl) in [("images", "labels"), ("imagesTr", "labelsTr")] {
        let (i, l) = (root.join(img), root.join(lbl));
        if i.is_dir() && l.is_dir() {
            return Ok((i, l));
        }
    }
    Err(Error::InvalidInput(format!(
        "{}: expected images/ and labels/ (or imagesTr/ and labelsTr/) subdirectories",
        root.display()
    )))
}

fn volume_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        // Skip dotfiles such as macOS "._" resource forks shipped in some archives.
        if !name.starts_with('.') && path.is_file() && VOLUME_EXTS.iter().any(|e| name.ends_with(e)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// A labeled case on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseFiles {
    pub id: String,
    pub image: PathBuf,
    pub label: PathBuf,
}

/// All cases under `root` that have both an image and a label, sorted by id.
pub fn list_cases(root: &Path) -> Result<Vec<CaseFiles>> {
    let (img_dir, lbl_dir) = dataset_dirs(root)?;
    let labels = volume_files(&lbl_dir)?;
    let mut cases = Vec::new();
    for image in volume_files(&img_dir)? {
        let id = volume_id(&image);
        if let Some(label) = labels.iter().find(|l| volume_id(l) == id) {
            cases.push(CaseFiles {
                id,
                image,
                label: label.clone(),
            });
        }
    }
    if cases.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(cases)
}

/// Loads an image and its label volume, checking that they align.
pub fn load_case(case: &CaseFiles) -> Result<(Volume, Volume)> {
    let image = read_volume(&case.image)?;
    let label = read_volume(&case.label)?;
    let label = match label.kind {
        VolumeKind::Mask => label,
        VolumeKind::Image => label.into_mask().map_err(|e| {
            Error::InvalidInput(format!("{}: {e}", case.label.display()))
        })?,
    };
    if image.kind != VolumeKind::Image {
        return Err(Error::InvalidInput(format!("{} is stored as a mask", case.image.display())));
    }
    if image.dims() != label.dims() {
        return Err(Error::ShapeMismatch(format!(
            "case {}: image dims {:?} vs label dims {:?}",
            case.id,
            image.dims(),
            label.dims()
        )));
    }
    let (mut image, mut label) = (image, label);
    image.id = case.id.clone();
    label.id = case.id.clone();
    Ok((image, label))
}
