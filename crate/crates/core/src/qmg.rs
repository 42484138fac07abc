//! Quality mask generation: raw proposals are filtered, then ranked by a
//! size-aware quality score.

use std::cmp::Ordering;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::types::{ImageRecord, MaskProposal};

/// A purified proposal with its quality scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredProposal {
    pub proposal: MaskProposal,
    pub area_ratio: f64,
    pub area_score: f64,
    pub balanced_score: f64,
}

/// Intermediate sets of one QMG run, kept for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct QmgStages {
    pub coarse: Vec<String>,
    pub purified: Vec<ScoredProposal>,
    pub refined: Vec<ScoredProposal>,
}

/// Fraction of the image covered by the proposal.
pub fn area_ratio(proposal: &MaskProposal) -> f64 {
    proposal.mask.area() as f64 / proposal.mask.len() as f64
}

/// Keeps proposals whose area ratio is at least `tau_area`, in input order.
pub fn initial_filter(proposals: &[MaskProposal], tau_area: f64) -> Vec<MaskProposal> {
    proposals
        .iter()
        .filter(|p| area_ratio(p) >= tau_area)
        .cloned()
        .collect()
}

/// `|current ∩ other| / |current|`.
pub fn overlap_ratio(current: &BinaryMask, other: &BinaryMask) -> Result<f64> {
    let area = current.area();
    if area == 0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(current.intersection_area(other)? as f64 / area as f64)
}

/// Total "larger than" order used by the overlap filter: larger area first,
/// equal areas by ascending mask id.
fn larger_first(a: &MaskProposal, b: &MaskProposal) -> Ordering {
    b.mask
        .area()
        .cmp(&a.mask.area())
        .then_with(|| a.mask_id.cmp(&b.mask_id))
}

/// Removes every proposal that is contained (ratio >= `tau_con`) in a larger
/// surviving proposal. Survivors are returned in ascending area order.
///
/// A mask's fate depends only on masks larger than it, so decisions are
/// settled from the largest mask down.
pub fn overlap_filter(proposals: &[MaskProposal], tau_con: f64) -> Vec<MaskProposal> {
    let mut order: Vec<&MaskProposal> = proposals.iter().filter(|p| p.mask.area() > 0).collect();
    order.sort_by(|a, b| larger_first(a, b));

    let mut kept: Vec<&MaskProposal> = Vec::with_capacity(order.len());
    for candidate in order {
        let contained = kept
            .iter()
            .any(|larger| overlap_ratio(&candidate.mask, &larger.mask).is_ok_and(|r| r >= tau_con));
        if !contained {
            kept.push(candidate);
        }
    }
    kept.reverse();
    kept.into_iter().cloned().collect()
}

/// Piecewise size preference: ramps up to 1 below `r_min`, flat on
/// `[r_min, r_max]`, linearly penalized (floored at `sigma`) above `r_max`.
pub fn area_score(r: f64, r_min: f64, r_max: f64, sigma: f64, gamma: f64) -> f64 {
    if r < r_min {
        r / r_min
    } else if r <= r_max {
        1.0
    } else {
        sigma.max(1.0 - (r - r_max) * gamma)
    }
}

pub fn balanced_score(predicted_iou: f64, area_score: f64, alpha: f64, beta: f64) -> f64 {
    alpha * predicted_iou + beta * area_score
}

pub fn score_proposal(proposal: MaskProposal, config: &PipelineConfig) -> ScoredProposal {
    let ratio = area_ratio(&proposal);
    let s_area = area_score(
        ratio,
        config.r_min,
        config.r_max,
        config.sigma,
        config.gamma,
    );
    let s_ba = balanced_score(proposal.predicted_iou, s_area, config.alpha, config.beta);
    ScoredProposal {
        proposal,
        area_ratio: ratio,
        area_score: s_area,
        balanced_score: s_ba,
    }
}

/// Descending score, ties by ascending mask id.
pub(crate) fn by_score_desc(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

pub fn run_qmg_staged(image: &ImageRecord, config: &PipelineConfig) -> QmgStages {
    let nonempty: Vec<MaskProposal> = image
        .proposals
        .iter()
        .filter(|p| p.mask.area() > 0)
        .cloned()
        .collect();
    let coarse = initial_filter(&nonempty, config.tau_area);
    let purified: Vec<ScoredProposal> = overlap_filter(&coarse, config.tau_con)
        .into_iter()
        .map(|p| score_proposal(p, config))
        .collect();
    let mut refined = purified.clone();
    refined.sort_by(|a, b| {
        by_score_desc(
            (a.balanced_score, &a.proposal.mask_id),
            (b.balanced_score, &b.proposal.mask_id),
        )
    });
    refined.truncate(config.t_r);
    QmgStages {
        coarse: coarse.into_iter().map(|p| p.mask_id).collect(),
        purified,
        refined,
    }
}

/// At most `t_r` refined proposals, best balanced score first.
pub fn run_qmg(image: &ImageRecord, config: &PipelineConfig) -> Vec<ScoredProposal> {
    run_qmg_staged(image, config).refined
}
