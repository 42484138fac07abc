//! Seeded synthetic groups with a planted co-salient object per image.
//!
//! Proposals of every image:
//!
//! - the planted object, whose prototype comes from a cluster shared across
//!   the group
//! - salient distractors, each with a cluster of its own
//! - the background region
//! - spurious rectangles with unrelated prototypes
//! - parts of the planted object, removed by containment
//! - specks below the trivial-area threshold
//!
//! Attention is rendered at reduced resolution so that the pipeline must
//! resample it.

pub mod oracle;
pub mod rng;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionMap;
use crate::error::{Error, Result};
use crate::interchange::{self, write_json};
use crate::mask::BinaryMask;
use crate::types::{GroupRecord, ImageRecord, MaskProposal, PrototypeVector};

use rng::FixtureRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_images: usize,
    pub width: usize,
    pub height: usize,
    pub n_distractors: usize,
    /// Max radius/center perturbation of the planted proposal, in pixels.
    pub boundary_jitter: f64,
    pub n_spurious: usize,
    pub n_trivial: usize,
    pub n_parts: usize,
    pub prototype_dim: usize,
    /// Norm of the Gaussian perturbation added to a cluster center before
    /// renormalizing.
    pub angular_noise: f64,
    pub attention_peak: f64,
    pub attention_noise: f64,
    /// Attention is rendered at `1 / attention_downsample` resolution.
    pub attention_downsample: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_images: 5,
            width: 128,
            height: 96,
            n_distractors: 1,
            boundary_jitter: 1.0,
            n_spurious: 4,
            n_trivial: 4,
            n_parts: 2,
            prototype_dim: 64,
            angular_noise: 0.3,
            attention_peak: 1.0,
            attention_noise: 0.15,
            attention_downsample: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.n_images == 0 {
            return bad("n_images must be >= 1");
        }
        if self.width < 32 || self.height < 32 {
            return bad("images must be at least 32x32");
        }
        if self.prototype_dim == 0 {
            return bad("prototype_dim must be >= 1");
        }
        if self.attention_downsample == 0 {
            return bad("attention_downsample must be >= 1");
        }
        let levels = [
            self.boundary_jitter,
            self.angular_noise,
            self.attention_noise,
            self.attention_peak,
        ];
        if levels.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise levels must be finite and >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthGroup {
    pub group: GroupRecord,
    /// Ground-truth object per image.
    pub gt: Vec<BinaryMask>,
    /// Mask id of the planted proposal per image.
    pub planted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRecord {
    pub group_id: String,
    pub seed: u64,
    /// image_id -> planted mask_id
    pub planted: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }

    fn raster(&self, w: usize, h: usize) -> Vec<bool> {
        (0..w * h)
            .map(|i| self.contains((i % w) as f64 + 0.5, (i / w) as f64 + 0.5))
            .collect()
    }

    fn separated(&self, other: &Ellipse, gap: f64) -> bool {
        (self.cx - other.cx).abs() > self.rx + other.rx + gap
            || (self.cy - other.cy).abs() > self.ry + other.ry + gap
    }
}

fn random_ellipse(rng: &mut FixtureRng, w: usize, h: usize, area_lo: f64, area_hi: f64) -> Ellipse {
    let (wf, hf) = (w as f64, h as f64);
    let area = rng.range(area_lo, area_hi) * wf * hf;
    let aspect = rng.range(0.75, 1.33);
    let mut rx = (area * aspect / std::f64::consts::PI).sqrt();
    let mut ry = area / (std::f64::consts::PI * rx);
    // keep the ellipse inside the frame with a 2 px margin
    let shrink = ((wf / 2.0 - 2.0) / rx).min((hf / 2.0 - 2.0) / ry).min(1.0);
    rx *= shrink;
    ry *= shrink;
    Ellipse {
        cx: rng.range(rx + 2.0, wf - rx - 2.0),
        cy: rng.range(ry + 2.0, hf - ry - 2.0),
        rx,
        ry,
    }
}

fn unit_vector(rng: &mut FixtureRng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Center plus Gaussian noise of expected norm `noise`, renormalized.
fn jittered(rng: &mut FixtureRng, center: &[f64], noise: f64) -> Vec<f64> {
    if noise == 0.0 {
        return center.to_vec();
    }
    let scale = noise / (center.len() as f64).sqrt();
    let v: Vec<f64> = center.iter().map(|c| c + scale * rng.normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn rect_raster(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Vec<bool> {
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            x >= x0 && x < x1 && y >= y0 && y < y1
        })
        .collect()
}

struct Candidate {
    raster: Vec<bool>,
    iou: f64,
    prototype: Vec<f64>,
    planted: bool,
}

/// Renders one low-resolution attention cell as the covered fraction of
/// salient pixels in its block, scaled by the peak, plus uniform noise.
fn render_attention(
    rng: &mut FixtureRng,
    salient: &[(Vec<bool>, f64)],
    config: &SynthConfig,
) -> Result<AttentionMap> {
    let (w, h, k) = (config.width, config.height, config.attention_downsample);
    let rows = h.div_ceil(k);
    let cols = w.div_ceil(k);
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut total = 0.0;
            let mut count = 0usize;
            for y in r * k..((r + 1) * k).min(h) {
                for x in c * k..((c + 1) * k).min(w) {
                    let i = y * w + x;
                    total += salient
                        .iter()
                        .map(|(m, amp)| if m[i] { *amp } else { 0.0 })
                        .fold(0.0, f64::max);
                    count += 1;
                }
            }
            let signal = config.attention_peak * total / count as f64;
            values.push(signal + config.attention_noise * rng.uniform());
        }
    }
    AttentionMap::new(rows, cols, values)
}

fn generate_image(
    rng: &mut FixtureRng,
    image_id: &str,
    shared_center: &[f64],
    config: &SynthConfig,
) -> Result<(ImageRecord, BinaryMask, String)> {
    let (w, h, d) = (config.width, config.height, config.prototype_dim);
    let noise = config.angular_noise;
    let j = config.boundary_jitter;

    let object = random_ellipse(rng, w, h, 0.17, 0.28);
    let gt_raster = object.raster(w, h);

    let planted_shape = Ellipse {
        cx: object.cx + rng.range(-j, j) / 2.0,
        cy: object.cy + rng.range(-j, j) / 2.0,
        rx: object.rx + rng.range(-j, j),
        ry: object.ry + rng.range(-j, j),
    };
    let planted_raster = planted_shape.raster(w, h);

    let mut cands = vec![Candidate {
        raster: planted_raster.clone(),
        iou: rng.range(0.88, 0.98),
        prototype: jittered(rng, shared_center, noise),
        planted: true,
    }];

    let mut occupied = vec![object];
    let mut salient = vec![(gt_raster.clone(), rng.range(0.7, 1.0))];
    for _ in 0..config.n_distractors {
        let mut placed = None;
        for _ in 0..200 {
            let e = random_ellipse(rng, w, h, 0.05, 0.1);
            if occupied.iter().all(|o| e.separated(o, 2.0)) {
                placed = Some(e);
                break;
            }
        }
        let Some(e) = placed else { continue };
        occupied.push(e);
        let raster = e.raster(w, h);
        let own_center = unit_vector(rng, d);
        salient.push((raster.clone(), rng.range(0.8, 1.0)));
        cands.push(Candidate {
            raster,
            iou: rng.range(0.85, 0.97),
            prototype: jittered(rng, &own_center, noise),
            planted: false,
        });
    }

    let background: Vec<bool> = (0..w * h)
        .map(|i| !salient.iter().any(|(m, _)| m[i]))
        .collect();
    cands.push(Candidate {
        raster: background,
        iou: rng.range(0.7, 0.9),
        prototype: unit_vector(rng, d),
        planted: false,
    });

    for _ in 0..config.n_spurious {
        let area = rng.range(0.02, 0.1) * (w * h) as f64;
        let aspect = rng.range(0.5, 2.0);
        let rw = ((area * aspect).sqrt() as usize).clamp(2, w - 1);
        let rh = ((area / rw as f64) as usize).clamp(2, h - 1);
        let x0 = rng.below(w - rw + 1);
        let y0 = rng.below(h - rh + 1);
        cands.push(Candidate {
            raster: rect_raster(w, h, x0, y0, x0 + rw, y0 + rh),
            iou: rng.range(0.6, 0.95),
            prototype: unit_vector(rng, d),
            planted: false,
        });
    }

    for p in 0..config.n_parts {
        let cut: Box<dyn Fn(usize) -> bool> = match p % 4 {
            0 => Box::new(|i| ((i % w) as f64 + 0.5) < object.cx),
            1 => Box::new(|i| ((i / w) as f64 + 0.5) < object.cy),
            2 => Box::new(|i| ((i % w) as f64 + 0.5) >= object.cx),
            _ => Box::new(|i| ((i / w) as f64 + 0.5) >= object.cy),
        };
        let raster: Vec<bool> = planted_raster
            .iter()
            .enumerate()
            .map(|(i, &b)| b && cut(i))
            .collect();
        cands.push(Candidate {
            raster,
            iou: rng.range(0.8, 0.95),
            prototype: jittered(rng, shared_center, noise * 2.0),
            planted: false,
        });
    }

    for _ in 0..config.n_trivial {
        let s = 2 + rng.below(6);
        let x0 = rng.below(w - s);
        let y0 = rng.below(h - s);
        cands.push(Candidate {
            raster: rect_raster(w, h, x0, y0, x0 + s, y0 + s),
            iou: rng.range(0.5, 0.9),
            prototype: unit_vector(rng, d),
            planted: false,
        });
    }

    let attention = render_attention(rng, &salient, config)?;

    rng.shuffle(&mut cands);
    let mut proposals = Vec::with_capacity(cands.len());
    let mut prototypes = BTreeMap::new();
    let mut planted_id = String::new();
    for (k, c) in cands.into_iter().enumerate() {
        let mask_id = format!("m{k:03}");
        if c.planted {
            planted_id = mask_id.clone();
        }
        let scale = rng.range(0.5, 2.0);
        let raw: Vec<f64> = c
            .prototype
            .iter()
            .map(|v| ((v * scale) as f32) as f64)
            .collect();
        prototypes.insert(
            mask_id.clone(),
            PrototypeVector::new(image_id, &mask_id, raw)?,
        );
        let iou = ((c.iou * 1e4).round() / 1e4) as f32 as f64;
        proposals.push(MaskProposal::new(
            &mask_id,
            BinaryMask::encode(w, h, &c.raster)?,
            iou,
        )?);
    }
    // stored as f32 on disk; keep the in-memory record identical
    let attention = AttentionMap::new(
        attention.rows(),
        attention.cols(),
        attention
            .values()
            .iter()
            .map(|&v| v as f32 as f64)
            .collect(),
    )?;
    let image = ImageRecord::new(image_id, w, h, proposals, attention, prototypes)?;
    Ok((image, BinaryMask::encode(w, h, &gt_raster)?, planted_id))
}

/// The group identified by `config.seed`, fully determined by the config.
pub fn generate_group(group_id: &str, config: &SynthConfig) -> Result<SynthGroup> {
    config.validate()?;
    let mut rng = FixtureRng::new(config.seed);
    let shared = unit_vector(&mut rng, config.prototype_dim);
    let mut images = Vec::with_capacity(config.n_images);
    let mut gt = Vec::with_capacity(config.n_images);
    let mut planted = Vec::with_capacity(config.n_images);
    for n in 0..config.n_images {
        let (img, truth, id) = generate_image(&mut rng, &format!("img_{n:02}"), &shared, config)?;
        images.push(img);
        gt.push(truth);
        planted.push(id);
    }
    Ok(SynthGroup {
        group: GroupRecord::new(group_id, images)?,
        gt,
        planted,
    })
}

/// Writes the interchange directory plus `gt_<id>.png` and `planted.json`.
pub fn write_synth_group(dir: &Path, synth: &SynthGroup, config: &SynthConfig) -> Result<()> {
    let echo = serde_json::to_value(config).ok();
    interchange::write_group(dir, &synth.group, echo)?;
    for (img, gt) in synth.group.images.iter().zip(&synth.gt) {
        interchange::write_mask_png(&dir.join(format!("gt_{}.png", img.image_id)), gt)?;
    }
    let record = PlantedRecord {
        group_id: synth.group.group_id.clone(),
        seed: config.seed,
        planted: synth
            .group
            .images
            .iter()
            .zip(&synth.planted)
            .map(|(img, id)| (img.image_id.clone(), id.clone()))
            .collect(),
    };
    write_json(&dir.join("planted.json"), &record)
}

/// Generates `groups` groups under `out`, group `g` seeded with `seed + g`.
pub fn generate_dataset(
    out: &Path,
    base: &SynthConfig,
    groups: usize,
) -> Result<Vec<std::path::PathBuf>> {
    (0..groups)
        .map(|g| {
            let config = SynthConfig {
                seed: base.seed.wrapping_add(g as u64),
                ..base.clone()
            };
            let group_id = format!("group_{g:03}");
            let dir = out.join(&group_id);
            let synth = generate_group(&group_id, &config)?;
            write_synth_group(&dir, &synth, &config)?;
            Ok(dir)
        })
        .collect()
}
