//! End-to-end orchestration of one group, with diagnostics and the two-pass
//! prototype protocol.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::interchange::{
    self, ImageRequests, MaskRequest, PrototypeRequests, DIAGNOSTICS_FILE, REQUESTS_FILE,
};
use crate::ips::{self, CoSaliencyResult};
use crate::isf::{self, IsfStages};
use crate::qmg::{self, QmgStages};
use crate::types::{GroupRecord, ImageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// All prototypes are present up front.
    #[default]
    Oneshot,
    /// Missing prototypes are requested and the run pauses.
    TwoPass,
}

/// Rounds to 9 significant digits for stable serialization.
pub fn sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityEntry {
    pub mask_id: String,
    pub area_ratio: f64,
    pub area_score: f64,
    pub balanced_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub mask_id: String,
    pub score: f64,
}

impl ScoreEntry {
    fn new(mask_id: &str, score: f64) -> Self {
        Self {
            mask_id: mask_id.to_string(),
            score: sig9(score),
        }
    }
}

/// Stage-by-stage record of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: String,
    pub raw: Vec<String>,
    pub coarse: Vec<String>,
    pub purified: Vec<QualityEntry>,
    pub refined: Vec<String>,
    pub saliency: Vec<ScoreEntry>,
    pub fallback: bool,
    pub salient: Vec<String>,
    pub co_salient: Vec<ScoreEntry>,
    pub tau_sem: Option<f64>,
    pub selected: String,
    pub selected_co_salient_score: Option<f64>,
    pub merged: Vec<String>,
}

/// Deterministic section of `diagnostics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub group_id: String,
    pub ips: String,
    pub config: PipelineConfig,
    pub images: Vec<ImageReport>,
}

impl RunReport {
    /// Checks raw ⊇ coarse ⊇ purified ⊇ refined ⊇ salient ∋ selected. The
    /// fallback mask is the one id allowed outside the raw set.
    pub fn check_nesting(&self) -> std::result::Result<(), String> {
        fn subset<'a>(
            name: &str,
            inner: impl IntoIterator<Item = &'a String>,
            outer: &HashSet<&String>,
            image: &str,
        ) -> std::result::Result<(), String> {
            for id in inner {
                if !outer.contains(id) {
                    return Err(format!(
                        "image `{image}`: {name} id `{id}` not in parent stage"
                    ));
                }
            }
            Ok(())
        }
        for img in &self.images {
            let raw: HashSet<&String> = img.raw.iter().collect();
            let coarse: HashSet<&String> = img.coarse.iter().collect();
            let purified: HashSet<&String> = img.purified.iter().map(|q| &q.mask_id).collect();
            let refined: HashSet<&String> = img.refined.iter().collect();
            subset("coarse", &img.coarse, &raw, &img.image_id)?;
            subset("purified", purified.iter().copied(), &coarse, &img.image_id)?;
            subset("refined", &img.refined, &purified, &img.image_id)?;
            if img.fallback {
                if img.salient != [crate::types::FALLBACK_MASK_ID] {
                    return Err(format!(
                        "image `{}`: fallback must be the only salient mask",
                        img.image_id
                    ));
                }
            } else {
                subset("salient", &img.salient, &refined, &img.image_id)?;
            }
            if !img.salient.contains(&img.selected) {
                return Err(format!(
                    "image `{}`: selected mask not salient",
                    img.image_id
                ));
            }
            let salient: HashSet<&String> = img.salient.iter().collect();
            subset("merged", &img.merged, &salient, &img.image_id)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageTiming {
    pub image_id: String,
    pub qmg_ms: f64,
    pub isf_ms: f64,
}

/// Volatile section of `diagnostics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub images: Vec<ImageTiming>,
    pub ips_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub deterministic: RunReport,
    pub volatile: Timings,
}

/// QMG and ISF outputs of one image.
#[derive(Debug, Clone)]
pub struct ImageStages {
    pub qmg: QmgStages,
    pub isf: IsfStages,
    pub timing: ImageTiming,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn analyze_image(image: &ImageRecord, config: &PipelineConfig) -> Result<ImageStages> {
    let t0 = Instant::now();
    let qmg = qmg::run_qmg_staged(image, config);
    let qmg_ms = ms(t0);
    let t1 = Instant::now();
    let isf = isf::run_isf_staged(image, &qmg.refined, config)?;
    Ok(ImageStages {
        qmg,
        isf,
        timing: ImageTiming {
            image_id: image.image_id.clone(),
            qmg_ms,
            isf_ms: ms(t1),
        },
    })
}

/// QMG and ISF for every image, in parallel, in group order.
pub fn analyze_group(group: &GroupRecord, config: &PipelineConfig) -> Result<Vec<ImageStages>> {
    group
        .images
        .par_iter()
        .map(|img| analyze_image(img, config))
        .collect()
}

/// ISF survivors that lack a prototype. Empty for single-image groups,
/// which never reach cross-image matching.
pub fn missing_prototypes(group: &GroupRecord, stages: &[ImageStages]) -> Vec<ImageRequests> {
    if group.images.len() < 2 {
        return Vec::new();
    }
    group
        .images
        .iter()
        .zip(stages)
        .filter_map(|(img, st)| {
            let masks: Vec<MaskRequest> = st
                .isf
                .salient
                .iter()
                .filter(|s| img.prototype(&s.proposal.mask_id).is_none())
                .map(|s| MaskRequest {
                    mask_id: s.proposal.mask_id.clone(),
                    rle: s.proposal.mask.clone(),
                })
                .collect();
            (!masks.is_empty()).then(|| ImageRequests {
                image_id: img.image_id.clone(),
                masks,
            })
        })
        .collect()
}

/// Predictions and diagnostics for one group.
#[derive(Debug, Clone)]
pub struct GroupPrediction {
    pub results: Vec<CoSaliencyResult>,
    pub report: RunReport,
    pub timings: Timings,
}

fn build_report(
    group: &GroupRecord,
    stages: &[ImageStages],
    outcome: &ips::IpsOutcome,
    config: &PipelineConfig,
) -> RunReport {
    let images = group
        .images
        .iter()
        .zip(stages)
        .enumerate()
        .map(|(n, (img, st))| {
            let result = &outcome.results[n];
            ImageReport {
                image_id: img.image_id.clone(),
                raw: img.proposals.iter().map(|p| p.mask_id.clone()).collect(),
                coarse: st.qmg.coarse.clone(),
                purified: st
                    .qmg
                    .purified
                    .iter()
                    .map(|s| QualityEntry {
                        mask_id: s.proposal.mask_id.clone(),
                        area_ratio: sig9(s.area_ratio),
                        area_score: sig9(s.area_score),
                        balanced_score: sig9(s.balanced_score),
                    })
                    .collect(),
                refined: st
                    .qmg
                    .refined
                    .iter()
                    .map(|s| s.proposal.mask_id.clone())
                    .collect(),
                saliency: st
                    .isf
                    .scores
                    .iter()
                    .map(|(id, s)| ScoreEntry::new(id, *s))
                    .collect(),
                fallback: st.isf.fallback,
                salient: st
                    .isf
                    .salient
                    .iter()
                    .map(|s| s.proposal.mask_id.clone())
                    .collect(),
                co_salient: outcome
                    .scores
                    .get(n)
                    .map(|v| v.iter().map(|(id, s)| ScoreEntry::new(id, *s)).collect())
                    .unwrap_or_default(),
                tau_sem: outcome.tau_sem.get(n).copied().flatten().map(sig9),
                selected: result.selected_mask_id.clone(),
                selected_co_salient_score: result.co_salient_score.map(sig9),
                merged: result.merged_mask_ids.clone(),
            }
        })
        .collect();
    RunReport {
        group_id: group.group_id.clone(),
        ips: if outcome.skipped { "skipped" } else { "ran" }.to_string(),
        config: config.clone(),
        images,
    }
}

/// Runs matching on already analyzed images.
pub fn finish_group(
    group: &GroupRecord,
    stages: Vec<ImageStages>,
    config: &PipelineConfig,
    started: Instant,
) -> Result<GroupPrediction> {
    let salient: Vec<_> = stages.iter().map(|s| s.isf.salient.clone()).collect();
    let t0 = Instant::now();
    let outcome = ips::run_ips_detailed(group, &salient, config)?;
    let ips_ms = ms(t0);
    let report = build_report(group, &stages, &outcome, config);
    Ok(GroupPrediction {
        results: outcome.results,
        report,
        timings: Timings {
            images: stages.into_iter().map(|s| s.timing).collect(),
            ips_ms,
            total_ms: ms(started),
        },
    })
}

/// In-memory run requiring every needed prototype to be present.
pub fn predict_group(group: &GroupRecord, config: &PipelineConfig) -> Result<GroupPrediction> {
    let started = Instant::now();
    let stages = analyze_group(group, config)?;
    finish_group(group, stages, config, started)
}

#[derive(Debug, Clone)]
pub enum RunOutcome {
    Completed(GroupPrediction),
    PrototypesRequested(PrototypeRequests),
}

/// Runs a group directory, writing `prediction_<id>.png` files and
/// `diagnostics.json` into `out_dir`.
///
/// In two-pass mode missing prototypes are written to
/// `prototype_requests.json` in the group directory instead. In oneshot mode
/// a missing prototype for a non-fallback candidate is an error.
pub fn run_group(
    group_dir: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
    mode: Mode,
) -> Result<RunOutcome> {
    let started = Instant::now();
    let loaded = interchange::load_group(group_dir)?;
    let group = &loaded.group;
    let stages = analyze_group(group, config)?;

    if mode == Mode::TwoPass {
        let pending = missing_prototypes(group, &stages);
        if !pending.is_empty() {
            let requests = PrototypeRequests {
                group_id: group.group_id.clone(),
                images: pending,
            };
            interchange::write_json(&group_dir.join(REQUESTS_FILE), &requests)?;
            return Ok(RunOutcome::PrototypesRequested(requests));
        }
    }
    let prediction = finish_group(group, stages, config, started)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for r in &prediction.results {
        interchange::write_mask_png(
            &out_dir.join(interchange::prediction_file(&r.image_id)),
            &r.mask,
        )?;
    }
    let diagnostics = Diagnostics {
        deterministic: prediction.report.clone(),
        volatile: prediction.timings.clone(),
    };
    interchange::write_json(&out_dir.join(DIAGNOSTICS_FILE), &diagnostics)?;
    Ok(RunOutcome::Completed(prediction))
}
