//! Training-curve images.
//!
//! Each chart plots one quantity against epoch: training in blue, validation
//! in orange, with horizontal grid lines at tenths of the value range. Charts
//! carry no text; the CSV log holds the numbers.

use std::path::Path;

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_cross_mut, draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use crate::error::{Error, Result};
use crate::training::TrainLog;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: f32 = 40.0;
const TRAIN_COLOR: Rgb<u8> = Rgb([31, 119, 180]);
const VAL_COLOR: Rgb<u8> = Rgb([255, 127, 14]);

/// Draws one chart with two series sharing the x axis.
pub fn render_chart(train: &[f64], validation: &[f64], fixed_range: Option<(f64, f64)>) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (x0, y0) = (MARGIN, MARGIN);
    let (x1, y1) = (WIDTH as f32 - MARGIN, HEIGHT as f32 - MARGIN);

    let (lo, hi) = fixed_range.unwrap_or_else(|| {
        let all = train.iter().chain(validation).copied().filter(|v| v.is_finite());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 0.5, lo + 0.5)
        } else {
            (0.0, 1.0)
        }
    });
    for i in 0..=10 {
        let y = y1 - (y1 - y0) * i as f32 / 10.0;
        draw_line_segment_mut(&mut img, (x0, y), (x1, y), Rgb([225, 225, 225]));
    }
    let frame = Rect::at(x0 as i32, y0 as i32).of_size((x1 - x0) as u32 + 1, (y1 - y0) as u32 + 1);
    draw_hollow_rect_mut(&mut img, frame, Rgb([0, 0, 0]));

    let n = train.len().max(validation.len());
    let px = |i: usize| if n > 1 { x0 + (x1 - x0) * i as f32 / (n - 1) as f32 } else { (x0 + x1) / 2.0 };
    let py = |v: f64| y1 - (y1 - y0) * ((v - lo) / (hi - lo)).clamp(0.0, 1.0) as f32;
    for (series, color) in [(train, TRAIN_COLOR), (validation, VAL_COLOR)] {
        let points: Vec<(f32, f32)> = series.iter().enumerate().map(|(i, &v)| (px(i), py(v))).collect();
        for pair in points.windows(2) {
            draw_line_segment_mut(&mut img, pair[0], pair[1], color);
        }
        for &(x, y) in &points {
            draw_cross_mut(&mut img, color, x.round() as i32, y.round() as i32);
        }
    }
    img
}

/// Writes `loss_curves.png` and `dice_curves.png` into `dir`.
pub fn write_curves(log: &TrainLog, dir: &Path) -> Result<()> {
    let r = log.records();
    let series = |f: fn(&crate::training::EpochRecord) -> f64| r.iter().map(f).collect::<Vec<_>>();
    let loss = render_chart(&series(|e| e.train_loss), &series(|e| e.val_loss), None);
    let dice = render_chart(&series(|e| e.train_dice), &series(|e| e.val_dice), Some((0.0, 1.0)));
    for (img, name) in [(loss, "loss_curves.png"), (dice, "dice_curves.png")] {
        let path = dir.join(name);
        img.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_colors_appear() {
        let img = render_chart(&[1.0, 0.5, 0.25], &[1.2, 0.6, 0.4], None);
        assert_eq!(img.dimensions(), (WIDTH, HEIGHT));
        assert!(img.pixels().any(|p| *p == TRAIN_COLOR));
        assert!(img.pixels().any(|p| *p == VAL_COLOR));
        // Degenerate inputs still render.
        render_chart(&[0.3], &[], None);
        render_chart(&[], &[], None);
    }
}
