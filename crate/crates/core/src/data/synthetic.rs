//! Seeded synthetic stand-in for cardiac MRI: one bright ellipsoid per volume
//! on a noisy dark background, labeled by exact ellipsoid membership.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::volume::{Volume, VolumeKind};

const NOISE_STD: f64 = 0.05;

pub fn gen_synthetic(count: usize, dims: (usize, usize, usize), rng: &mut Rng) -> Result<Vec<(Volume, Volume)>> {
    let (h, w, d) = dims;
    if h == 0 || w == 0 || d == 0 || h % 16 != 0 || w % 16 != 0 {
        return Err(Error::InvalidConfig(format!(
            "synthetic dims {h}x{w}x{d}: height and width must be positive multiples of 16, depth positive"
        )));
    }
    (0..count)
        .map(|i| one_volume(&format!("synth_{i:03}"), dims, rng))
        .collect()
}

fn one_volume(id: &str, (h, w, d): (usize, usize, usize), rng: &mut Rng) -> Result<(Volume, Volume)> {
    let (hf, wf, df) = (h as f64, w as f64, d as f64);
    let center = [rng.range(0.35, 0.65) * hf, rng.range(0.35, 0.65) * wf, rng.range(0.4, 0.6) * df];
    // Through-plane radius exceeds the distance to the farthest slice, so the
    // ellipsoid cuts every slice and changes size smoothly between them.
    let radii = [rng.range(hf / 6.0, hf / 3.5), rng.range(wf / 6.0, wf / 3.5), rng.range(0.9, 1.2) * df];
    let background = rng.range(0.1, 0.25);
    let foreground = rng.range(0.65, 0.9);

    let mut image = Vec::with_capacity(h * w * d);
    let mut mask = Vec::with_capacity(h * w * d);
    for y in 0..h {
        for x in 0..w {
            for z in 0..d {
                let p = [y as f64 + 0.5, x as f64 + 0.5, z as f64 + 0.5];
                let r2: f64 = (0..3).map(|a| ((p[a] - center[a]) / radii[a]).powi(2)).sum();
                let inside = r2 <= 1.0;
                let base = if inside { foreground } else { background };
                image.push((base + NOISE_STD * rng.normal()) as f32);
                mask.push(if inside { 1.0 } else { 0.0 });
            }
        }
    }
    Ok((
        Volume::new(id, VolumeKind::Image, Tensor::from_vec(&[h, w, d], image)?)?,
        Volume::new(id, VolumeKind::Mask, Tensor::from_vec(&[h, w, d], mask)?)?,
    ))
}
