//! Inter-image prototype selection.
//!
//! Every salient candidate of every image carries a prototype vector. After
//! L2 normalization the pairwise dot products form a cosine matrix; each
//! candidate's co-salient score is the sum, over the other images, of its
//! best match in that image. The top-scoring candidate of each image is the
//! prediction, optionally unioned with further candidates of the same image
//! that are both semantically close to it and about as consistent across the
//! group.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::isf::SalientMask;
use crate::mask::BinaryMask;
use crate::types::{GroupRecord, ImageRecord};

/// Looks up the raw prototype of a mask.
pub trait PrototypeSource {
    fn prototype(&self, image_id: &str, mask_id: &str) -> Option<&[f64]>;
}

impl PrototypeSource for GroupRecord {
    fn prototype(&self, image_id: &str, mask_id: &str) -> Option<&[f64]> {
        self.images
            .iter()
            .find(|img| img.image_id == image_id)
            .and_then(|img| img.prototype(mask_id))
    }
}

impl ImageRecord {
    pub fn prototype(&self, mask_id: &str) -> Option<&[f64]> {
        self.prototypes.get(mask_id).map(|p| p.values.as_slice())
    }
}

/// Owner of one bank row: image index within the group and ISF rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Owner {
    pub image: usize,
    pub rank: usize,
}

/// Unit-normalized prototypes of all candidates, image-major, then ISF rank.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    vectors: Vec<Vec<f64>>,
    owner: Vec<Owner>,
    mask_ids: Vec<String>,
    n_images: usize,
    dim: usize,
}

fn unit(values: &[f64]) -> Result<Vec<f64>> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Ingestion(
            "prototype has zero or non-finite norm".into(),
        ));
    }
    Ok(values.iter().map(|v| v / norm).collect())
}

impl PrototypeBank {
    /// Builds a bank from raw per-image candidate prototypes. `images[n]`
    /// lists `(mask_id, raw vector)` in ISF rank order; images may be empty.
    pub fn from_raw(images: &[Vec<(String, Vec<f64>)>]) -> Result<Self> {
        let mut vectors = Vec::new();
        let mut owner = Vec::new();
        let mut mask_ids = Vec::new();
        let mut dim = None;
        for (image, cands) in images.iter().enumerate() {
            for (rank, (mask_id, raw)) in cands.iter().enumerate() {
                match dim {
                    None => dim = Some(raw.len()),
                    Some(d) if d != raw.len() => {
                        return Err(Error::Ingestion(format!(
                            "prototype `{mask_id}` has dimension {}, expected {d}",
                            raw.len()
                        )))
                    }
                    _ => {}
                }
                if raw.is_empty() {
                    return Err(Error::Ingestion(format!("prototype `{mask_id}` is empty")));
                }
                vectors.push(unit(raw).map_err(|_| {
                    Error::Ingestion(format!("prototype `{mask_id}` is the zero vector"))
                })?);
                owner.push(Owner { image, rank });
                mask_ids.push(mask_id.clone());
            }
        }
        Ok(Self {
            vectors,
            owner,
            mask_ids,
            n_images: images.len(),
            dim: dim.unwrap_or(0),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn owner(&self) -> &[Owner] {
        &self.owner
    }

    pub fn mask_ids(&self) -> &[String] {
        &self.mask_ids
    }

    /// Bank rows belonging to `image`, in rank order.
    pub fn rows_of(&self, image: usize) -> impl Iterator<Item = usize> + '_ {
        self.owner
            .iter()
            .enumerate()
            .filter(move |(_, o)| o.image == image)
            .map(|(i, _)| i)
    }

    /// Number of images that contribute at least one row.
    pub fn populated_images(&self) -> usize {
        (0..self.n_images)
            .filter(|&n| self.rows_of(n).next().is_some())
            .count()
    }
}

/// Collects prototypes for each image's ISF survivors and builds the bank.
///
/// A fallback candidate without a prototype leaves its image out of the bank;
/// any other missing prototype is an error.
pub fn build_bank(
    group: &GroupRecord,
    salient: &[Vec<SalientMask>],
    source: &dyn PrototypeSource,
) -> Result<PrototypeBank> {
    let mut raw = Vec::with_capacity(group.images.len());
    for (img, cands) in group.images.iter().zip(salient) {
        let mut rows = Vec::with_capacity(cands.len());
        for c in cands {
            match source.prototype(&img.image_id, &c.proposal.mask_id) {
                Some(v) => rows.push((c.proposal.mask_id.clone(), v.to_vec())),
                None if c.is_fallback => {}
                None => {
                    return Err(Error::IncompleteInput {
                        image_id: img.image_id.clone(),
                        mask_id: c.proposal.mask_id.clone(),
                    })
                }
            }
        }
        raw.push(rows);
    }
    PrototypeBank::from_raw(&raw)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense symmetric cosine matrix over the bank rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    side: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.side + j]
    }
}

pub fn cosine_matrix(bank: &PrototypeBank) -> SimilarityMatrix {
    let n = bank.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let c = dot(&bank.vectors[i], &bank.vectors[j]);
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    SimilarityMatrix { side: n, values }
}

/// For every row, the best similarity within each other populated image,
/// in image order.
pub fn cross_image_max(c: &SimilarityMatrix, bank: &PrototypeBank) -> Result<Vec<Vec<f64>>> {
    if bank.populated_images() < 2 {
        return Err(Error::DegenerateGroup);
    }
    let per_image: Vec<Vec<usize>> = (0..bank.n_images)
        .map(|n| bank.rows_of(n).collect())
        .collect();
    Ok((0..bank.len())
        .map(|i| {
            let own = bank.owner[i].image;
            per_image
                .iter()
                .enumerate()
                .filter(|(n, rows)| *n != own && !rows.is_empty())
                .map(|(_, rows)| {
                    rows.iter()
                        .map(|&j| c.get(i, j))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        })
        .collect())
}

/// Sum of each row's cross-image maxima.
pub fn co_salient_scores(maxima: &[Vec<f64>]) -> Vec<f64> {
    maxima.iter().map(|m| m.iter().sum()).collect()
}

/// Per image, the bank row with the highest score; ties go to the lower
/// ISF rank, then the lower mask id. `None` for images absent from the bank.
pub fn select_per_image(scores: &[f64], bank: &PrototypeBank) -> Vec<Option<usize>> {
    (0..bank.n_images)
        .map(|n| {
            bank.rows_of(n).reduce(|best, i| {
                let better = scores[i] > scores[best]
                    || (scores[i] == scores[best]
                        && (bank.owner[i].rank, &bank.mask_ids[i])
                            < (bank.owner[best].rank, &bank.mask_ids[best]));
                if better {
                    i
                } else {
                    best
                }
            })
        })
        .collect()
}

/// Linear-interpolated percentile of `values` at fraction `p` in [0, 1].
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Outcome of the dual-verification merge for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub mask: BinaryMask,
    pub merged: Vec<String>,
    /// Semantic threshold used, `None` when merging was disabled.
    pub tau_sem: Option<f64>,
}

/// Unions into the selected mask every other candidate of the same image
/// whose similarity to it reaches the image's semantic threshold and whose
/// co-salient score is within `tau_diff` of the selected one.
///
/// `rows[k]` is the bank row of `candidates[k]`.
pub fn merge_extra_instances(
    selected: usize,
    candidates: &[SalientMask],
    rows: &[usize],
    c: &SimilarityMatrix,
    scores: &[f64],
    config: &PipelineConfig,
) -> Result<MergeOutcome> {
    let primary = rows.iter().position(|&r| r == selected).ok_or_else(|| {
        Error::Ingestion(format!(
            "selected row {selected} is not among the image's candidates"
        ))
    })?;
    let mut mask = candidates[primary].proposal.mask.clone();
    let pairs: Vec<f64> = rows
        .iter()
        .enumerate()
        .flat_map(|(a, &ra)| rows[a + 1..].iter().map(move |&rb| c.get(ra, rb)))
        .collect();
    if pairs.len() < 2 {
        return Ok(MergeOutcome {
            mask,
            merged: Vec::new(),
            tau_sem: None,
        });
    }
    let tau_sem = percentile(&pairs, config.sem_percentile).expect("nonempty");
    let mut merged = Vec::new();
    for (k, &row) in rows.iter().enumerate() {
        if row == selected {
            continue;
        }
        let similar = c.get(selected, row) >= tau_sem;
        let consistent = (scores[row] - scores[selected]).abs() < config.tau_diff;
        if similar && consistent {
            mask = mask.union(&candidates[k].proposal.mask)?;
            merged.push(candidates[k].proposal.mask_id.clone());
        }
    }
    Ok(MergeOutcome {
        mask,
        merged,
        tau_sem: Some(tau_sem),
    })
}

/// Final prediction of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct CoSaliencyResult {
    pub image_id: String,
    pub selected_mask_id: String,
    /// ISF rank of the selected candidate.
    pub selected_rank: usize,
    /// `None` when cross-image matching did not score this image.
    pub co_salient_score: Option<f64>,
    pub merged_mask_ids: Vec<String>,
    pub mask: BinaryMask,
}

/// Full IPS outcome with per-candidate scores for diagnostics.
#[derive(Debug, Clone)]
pub struct IpsOutcome {
    /// True when the group could not be matched and ISF top-1 was used.
    pub skipped: bool,
    /// Per image: `(mask_id, co-salient score)` for every banked candidate.
    pub scores: Vec<Vec<(String, f64)>>,
    pub tau_sem: Vec<Option<f64>>,
    pub results: Vec<CoSaliencyResult>,
}

fn top1(image_id: &str, cands: &[SalientMask]) -> CoSaliencyResult {
    let first = &cands[0];
    CoSaliencyResult {
        image_id: image_id.to_string(),
        selected_mask_id: first.proposal.mask_id.clone(),
        selected_rank: 0,
        co_salient_score: None,
        merged_mask_ids: Vec::new(),
        mask: first.proposal.mask.clone(),
    }
}

pub fn run_ips_detailed(
    group: &GroupRecord,
    salient: &[Vec<SalientMask>],
    config: &PipelineConfig,
) -> Result<IpsOutcome> {
    if salient.len() != group.images.len() || salient.iter().any(Vec::is_empty) {
        return Err(Error::Ingestion(
            "every image needs at least one salient candidate".into(),
        ));
    }
    let ids = group.images.iter().map(|img| img.image_id.as_str());
    let all_top1 = |scores| IpsOutcome {
        skipped: true,
        scores,
        tau_sem: vec![None; salient.len()],
        results: ids
            .clone()
            .zip(salient)
            .map(|(id, c)| top1(id, c))
            .collect(),
    };
    if group.images.len() == 1 {
        return Ok(all_top1(vec![Vec::new()]));
    }
    let bank = build_bank(group, salient, group)?;
    if bank.populated_images() < 2 {
        return Ok(all_top1(vec![Vec::new(); salient.len()]));
    }
    let c = cosine_matrix(&bank);
    let scores = co_salient_scores(&cross_image_max(&c, &bank)?);
    let chosen = select_per_image(&scores, &bank);

    let mut out = IpsOutcome {
        skipped: false,
        scores: Vec::with_capacity(salient.len()),
        tau_sem: Vec::with_capacity(salient.len()),
        results: Vec::with_capacity(salient.len()),
    };
    for (n, (img, cands)) in group.images.iter().zip(salient).enumerate() {
        let rows: Vec<usize> = bank.rows_of(n).collect();
        out.scores.push(
            rows.iter()
                .map(|&r| (bank.mask_ids[r].clone(), scores[r]))
                .collect(),
        );
        let Some(sel) = chosen[n] else {
            out.tau_sem.push(None);
            out.results.push(top1(&img.image_id, cands));
            continue;
        };
        let banked: Vec<SalientMask> = rows
            .iter()
            .map(|&r| cands[bank.owner[r].rank].clone())
            .collect();
        let merge = merge_extra_instances(sel, &banked, &rows, &c, &scores, config)?;
        out.tau_sem.push(merge.tau_sem);
        out.results.push(CoSaliencyResult {
            image_id: img.image_id.clone(),
            selected_mask_id: bank.mask_ids[sel].clone(),
            selected_rank: bank.owner[sel].rank,
            co_salient_score: Some(scores[sel]),
            merged_mask_ids: merge.merged,
            mask: merge.mask,
        });
    }
    Ok(out)
}

/// Exactly one final mask per image.
pub fn run_ips(
    group: &GroupRecord,
    salient: &[Vec<SalientMask>],
    config: &PipelineConfig,
) -> Result<Vec<CoSaliencyResult>> {
    Ok(run_ips_detailed(group, salient, config)?.results)
}
