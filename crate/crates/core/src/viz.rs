//! Overlay rendering of predicted masks.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::interchange::{self, read_manifest};
use crate::mask::BinaryMask;

pub const CANVAS: Rgb<u8> = Rgb([96, 96, 96]);
pub const TINT_ALPHA: f64 = 0.5;

const PALETTE: [Rgb<u8>; 6] = [
    Rgb([230, 25, 75]),
    Rgb([60, 180, 75]),
    Rgb([0, 130, 200]),
    Rgb([245, 130, 48]),
    Rgb([145, 30, 180]),
    Rgb([255, 225, 25]),
];

/// Palette color chosen by an FNV-1a hash of the image id.
pub fn color_for(image_id: &str) -> Rgb<u8> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in image_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    PALETTE[(h % PALETTE.len() as u64) as usize]
}

/// Foreground pixels with at least one in-bounds background 4-neighbor.
pub fn outline(mask: &BinaryMask) -> Vec<bool> {
    let (w, h) = mask.dims();
    let fg = mask.decode();
    (0..w * h)
        .map(|i| {
            if !fg[i] {
                return false;
            }
            let (x, y) = (i % w, i / w);
            (x > 0 && !fg[i - 1])
                || (x + 1 < w && !fg[i + 1])
                || (y > 0 && !fg[i - w])
                || (y + 1 < h && !fg[i + w])
        })
        .collect()
}

fn blend(base: Rgb<u8>, tint: Rgb<u8>, alpha: f64) -> Rgb<u8> {
    let mix = |a: u8, b: u8| ((1.0 - alpha) * a as f64 + alpha * b as f64).round() as u8;
    Rgb([
        mix(base[0], tint[0]),
        mix(base[1], tint[1]),
        mix(base[2], tint[2]),
    ])
}

/// Tints the mask over `source`, or over a flat canvas, and draws its
/// outline in the full color.
pub fn render_overlay(
    mask: &BinaryMask,
    source: Option<&RgbImage>,
    color: Rgb<u8>,
) -> Result<RgbImage> {
    let (w, h) = mask.dims();
    let mut img = match source {
        Some(src) => {
            if src.dimensions() != (w as u32, h as u32) {
                return Err(Error::DimensionMismatch {
                    left: (src.width() as usize, src.height() as usize),
                    right: (w, h),
                });
            }
            src.clone()
        }
        None => RgbImage::from_pixel(w as u32, h as u32, CANVAS),
    };
    let fg = mask.decode();
    let edge = outline(mask);
    for (i, px) in img.pixels_mut().enumerate() {
        if edge[i] {
            *px = color;
        } else if fg[i] {
            *px = blend(*px, color, TINT_ALPHA);
        }
    }
    Ok(img)
}

fn find_source(dir: &Path, image_id: &str) -> Option<PathBuf> {
    ["png", "jpg", "jpeg"]
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct VizSummary {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn overlay_file(image_id: &str) -> String {
    format!("overlay_{image_id}.png")
}

/// Writes `overlay_<id>.png` for every manifest image with a prediction.
/// Missing predictions and unusable sources become warnings.
pub fn viz_group(
    group_dir: &Path,
    pred_dir: &Path,
    out_dir: &Path,
    source_dir: Option<&Path>,
) -> Result<VizSummary> {
    let manifest = read_manifest(group_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut summary = VizSummary::default();
    for entry in &manifest.images {
        let pred_path = pred_dir.join(interchange::prediction_file(&entry.image_id));
        if !pred_path.is_file() {
            let msg = format!(
                "{}: no prediction at {}",
                entry.image_id,
                pred_path.display()
            );
            log::warn!("{msg}");
            summary.warnings.push(msg);
            continue;
        }
        let mask = match interchange::read_mask_png(&pred_path) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("{e}");
                summary.warnings.push(e.to_string());
                continue;
            }
        };
        let source = source_dir
            .and_then(|d| find_source(d, &entry.image_id))
            .and_then(|p| match image::open(&p) {
                Ok(img) => Some(img.into_rgb8()),
                Err(e) => {
                    let msg = format!("{}: {e}", p.display());
                    log::warn!("{msg}");
                    summary.warnings.push(msg);
                    None
                }
            })
            .filter(|img| {
                let fits = img.dimensions() == (mask.width() as u32, mask.height() as u32);
                if !fits {
                    let msg = format!("{}: source size differs from prediction", entry.image_id);
                    log::warn!("{msg}");
                    summary.warnings.push(msg);
                }
                fits
            });
        let img = render_overlay(&mask, source.as_ref(), color_for(&entry.image_id))?;
        let out = out_dir.join(overlay_file(&entry.image_id));
        img.save_with_format(&out, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: out.clone(),
                source,
            })?;
        summary.written.push(out);
    }
    Ok(summary)
}

/// Pixels of an overlay that differ from the flat canvas.
pub fn tinted_pixels(img: &RgbImage) -> Vec<bool> {
    img.pixels().map(|p| *p != CANVAS).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_prediction_leaves_canvas() {
        let img = render_overlay(&BinaryMask::empty(8, 5).unwrap(), None, color_for("a")).unwrap();
        assert!(img.pixels().all(|p| *p == CANVAS));
    }

    #[test]
    fn full_prediction_tints_everything() {
        let c = color_for("a");
        let img = render_overlay(&BinaryMask::full(8, 5).unwrap(), None, c).unwrap();
        let tinted = blend(CANVAS, c, TINT_ALPHA);
        assert!(img.pixels().all(|p| *p == tinted));
    }

    #[test]
    fn outline_of_square() {
        let raster: Vec<bool> = (0..25)
            .map(|i| (1..4).contains(&(i % 5)) && (1..4).contains(&(i / 5)))
            .collect();
        let m = BinaryMask::encode(5, 5, &raster).unwrap();
        let e = outline(&m);
        assert_eq!(e.iter().filter(|&&b| b).count(), 8);
        assert!(!e[12]);
    }

    #[test]
    fn colors_are_deterministic() {
        assert_eq!(color_for("img_00"), color_for("img_00"));
        assert!(PALETTE.contains(&color_for("anything")));
    }

    #[test]
    fn source_size_mismatch_rejected() {
        let src = RgbImage::new(3, 3);
        assert!(render_overlay(&BinaryMask::empty(4, 4).unwrap(), Some(&src), CANVAS).is_err());
    }
}
