//! MAE and maximum F-measure between predicted and ground-truth maps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Weight of precision relative to recall in F-measure.
pub const BETA_SQUARED: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension { width, height });
        }
        if values.len() != width * height {
            return Err(Error::Ingestion(format!(
                "saliency map has {} values, expected {width}x{height}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Ingestion(
                "saliency values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_gray8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }

    pub fn from_mask(mask: &crate::mask::BinaryMask) -> Self {
        let values = mask
            .decode()
            .into_iter()
            .map(|b| if b { 1.0 } else { 0.0 })
            .collect();
        Self {
            width: mask.width(),
            height: mask.height(),
            values,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (w, h) = img.dimensions();
        Self::from_gray8(w as usize, h as usize, img.as_raw())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nearest-neighbor resampling with pixel-center alignment.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<SaliencyMap> {
        if (width, height) == (self.width, self.height) {
            return Ok(self.clone());
        }
        if width == 0 || height == 0 {
            return Err(Error::Dimension { width, height });
        }
        let src = |i: usize, src: usize, dst: usize| ((i * 2 + 1) * src / (dst * 2)).min(src - 1);
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = src(y, self.height, height);
            for x in 0..width {
                values.push(self.values[sy * self.width + src(x, self.width, width)]);
            }
        }
        Ok(SaliencyMap {
            width,
            height,
            values,
        })
    }

    fn check_dims(&self, other: &SaliencyMap) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch {
                left: (self.width, self.height),
                right: (other.width, other.height),
            });
        }
        Ok(())
    }
}

/// Mean absolute difference over all pixels.
pub fn mae(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    pred.check_dims(gt)?;
    let total: f64 = pred
        .values
        .iter()
        .zip(&gt.values)
        .map(|(p, g)| (p - g).abs())
        .sum();
    Ok(total / pred.values.len() as f64)
}

/// Quantizes to an 8-bit level.
fn level(v: f64) -> usize {
    (v * 255.0).round().clamp(0.0, 255.0) as usize
}

pub fn f_beta(precision: f64, recall: f64) -> f64 {
    let denom = BETA_SQUARED * precision + recall;
    if denom > 0.0 {
        (1.0 + BETA_SQUARED) * precision * recall / denom
    } else {
        0.0
    }
}

/// Maximum F-measure over the integer thresholds 1..=255 applied to the
/// 8-bit prediction. Ground truth is foreground where its value is >= 0.5.
/// Returns `None` when the ground truth has no foreground.
pub fn max_f_measure(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<Option<f64>> {
    pred.check_dims(gt)?;
    let mut fg_hist = [0u64; 256];
    let mut bg_hist = [0u64; 256];
    for (&p, &g) in pred.values.iter().zip(&gt.values) {
        if g >= 0.5 {
            fg_hist[level(p)] += 1;
        } else {
            bg_hist[level(p)] += 1;
        }
    }
    let positives: u64 = fg_hist.iter().sum();
    if positives == 0 {
        return Ok(None);
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best = 0.0f64;
    for t in (1..=255).rev() {
        tp += fg_hist[t];
        fp += bg_hist[t];
        if tp + fp == 0 {
            continue;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        best = best.max(f_beta(precision, recall));
    }
    Ok(Some(best))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub stem: String,
    pub mae: f64,
    /// `None` when the ground truth is empty.
    pub max_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetReport {
    pub mae: Option<f64>,
    pub max_f: Option<f64>,
    pub n_images: usize,
    pub per_image: Vec<ImageMetrics>,
    pub unmatched: Vec<String>,
}

impl DatasetReport {
    pub fn from_rows(per_image: Vec<ImageMetrics>, unmatched: Vec<String>) -> Self {
        let n = per_image.len();
        let mae = (n > 0).then(|| per_image.iter().map(|r| r.mae).sum::<f64>() / n as f64);
        let fs: Vec<f64> = per_image.iter().filter_map(|r| r.max_f).collect();
        let max_f = (!fs.is_empty()).then(|| fs.iter().sum::<f64>() / fs.len() as f64);
        Self {
            mae,
            max_f,
            n_images: n,
            per_image,
            unmatched,
        }
    }

    /// Plain-text table; the structure columns are not computed here.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let mut out = format!(
            "{:<32} {:>8} {:>8} {:>8} {:>8}\n",
            "image", "MAE", "F_max", "E_max", "S_alpha"
        );
        for r in &self.per_image {
            out.push_str(&format!(
                "{:<32} {:>8} {:>8} {:>8} {:>8}\n",
                r.stem,
                fmt(Some(r.mae)),
                fmt(r.max_f),
                "n/a",
                "n/a"
            ));
        }
        out.push_str(&format!(
            "{:<32} {:>8} {:>8} {:>8} {:>8}\n",
            format!("mean ({} images)", self.n_images),
            fmt(self.mae),
            fmt(self.max_f),
            "n/a",
            "n/a"
        ));
        for stem in &self.unmatched {
            out.push_str(&format!("unmatched: {stem}\n"));
        }
        out
    }
}

/// File stem with any `prediction_` / `gt_` prefix removed.
pub fn match_stem(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let stem = stem
        .strip_prefix("prediction_")
        .or_else(|| stem.strip_prefix("gt_"))
        .unwrap_or(stem);
    Some(stem.to_string())
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"));
        if is_image {
            if let Some(stem) = match_stem(&path) {
                out.insert(stem, path);
            }
        }
    }
    Ok(out)
}

pub fn evaluate_pair(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<(f64, Option<f64>)> {
    let pred = pred.resize_nearest(gt.width, gt.height)?;
    Ok((mae(&pred, gt)?, max_f_measure(&pred, gt)?))
}

/// Scores every prediction that has a ground-truth partner with the same
/// stem. Unmatched stems from either side are listed, not fatal.
pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path) -> Result<DatasetReport> {
    let preds = image_files(pred_dir)?;
    let gts = image_files(gt_dir)?;
    let mut rows = Vec::new();
    let mut unmatched = Vec::new();
    for (stem, gt_path) in &gts {
        let Some(pred_path) = preds.get(stem) else {
            unmatched.push(stem.clone());
            continue;
        };
        let gt = SaliencyMap::load(gt_path)?;
        let pred = SaliencyMap::load(pred_path)?;
        let (mae, max_f) = evaluate_pair(&pred, &gt)?;
        if max_f.is_none() {
            log::warn!("{stem}: ground truth has no foreground; excluded from F-measure");
        }
        rows.push(ImageMetrics {
            stem: stem.clone(),
            mae,
            max_f,
        });
    }
    unmatched.extend(preds.keys().filter(|s| !gts.contains_key(*s)).cloned());
    unmatched.sort();
    Ok(DatasetReport::from_rows(rows, unmatched))
}
