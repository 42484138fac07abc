//! Intra-image saliency filtering against the attention prior.

use crate::attention::AttentionMap;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::qmg::{by_score_desc, ScoredProposal};
use crate::types::{ImageRecord, MaskProposal, DEFAULT_PREDICTED_IOU, FALLBACK_MASK_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct SalientMask {
    pub proposal: MaskProposal,
    pub saliency_score: f64,
    pub is_fallback: bool,
}

/// Result of [`run_isf_staged`]: the survivors plus every refined score.
#[derive(Debug, Clone)]
pub struct IsfStages {
    pub scores: Vec<(String, f64)>,
    pub salient: Vec<SalientMask>,
    pub fallback: bool,
}

/// Mean attention over the mask's foreground pixels.
pub fn saliency_score(mask: &BinaryMask, att: &AttentionMap) -> Result<f64> {
    if (att.cols(), att.rows()) != mask.dims() {
        return Err(Error::DimensionMismatch {
            left: mask.dims(),
            right: (att.cols(), att.rows()),
        });
    }
    let area = mask.area();
    if area == 0 {
        return Err(Error::UndefinedScore);
    }
    let values = att.values();
    let sum: f64 = mask
        .spans()
        .map(|(start, end)| values[start..end].iter().sum::<f64>())
        .sum();
    Ok(sum / area as f64)
}

/// Top `t` by score, ties by ascending mask id.
pub fn select_salient(mut scored: Vec<(MaskProposal, f64)>, t: usize) -> Vec<SalientMask> {
    scored.sort_by(|a, b| by_score_desc((a.1, &a.0.mask_id), (b.1, &b.0.mask_id)));
    scored.truncate(t);
    scored
        .into_iter()
        .map(|(proposal, saliency_score)| SalientMask {
            proposal,
            saliency_score,
            is_fallback: false,
        })
        .collect()
}

/// Binarizes attention so that the top half of its values is foreground.
///
/// The cut is the `ceil(n / 2)`-th largest value and values tied with it are
/// foreground. When the cut equals the minimum of a non-constant map only
/// values strictly above it are kept, so a blob on a flat background stays
/// the blob. The mask is never empty.
pub fn fallback_mask(att: &AttentionMap) -> BinaryMask {
    let values = att.values();
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[n - n.div_ceil(2)];
    let (min, max) = (sorted[0], sorted[n - 1]);
    let raster: Vec<bool> = if cut == min && min < max {
        values.iter().map(|&v| v > cut).collect()
    } else {
        values.iter().map(|&v| v >= cut).collect()
    };
    BinaryMask::encode(att.cols(), att.rows(), &raster).expect("attention dims are nonzero")
}

/// Normalized attention at the image's pixel resolution.
pub fn prepare_attention(image: &ImageRecord) -> Result<AttentionMap> {
    image
        .attention
        .normalize()
        .resample(image.width, image.height)
}

fn fallback_candidate(att: &AttentionMap) -> SalientMask {
    SalientMask {
        proposal: MaskProposal {
            mask_id: FALLBACK_MASK_ID.to_string(),
            mask: fallback_mask(att),
            predicted_iou: DEFAULT_PREDICTED_IOU,
        },
        saliency_score: 1.0,
        is_fallback: true,
    }
}

/// Scores `refined` against an already prepared (normalized, pixel-resolution)
/// attention map and keeps the top `t`, or substitutes the fallback mask.
pub fn filter_with_attention(
    refined: &[ScoredProposal],
    att: &AttentionMap,
    config: &PipelineConfig,
) -> Result<IsfStages> {
    let scored = refined
        .iter()
        .map(|s| Ok((s.proposal.clone(), saliency_score(&s.proposal.mask, att)?)))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<(String, f64)> = scored
        .iter()
        .map(|(p, s)| (p.mask_id.clone(), *s))
        .collect();
    let best = scored
        .iter()
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    if scored.is_empty() || best < config.tau_fb {
        return Ok(IsfStages {
            scores,
            salient: vec![fallback_candidate(att)],
            fallback: true,
        });
    }
    Ok(IsfStages {
        scores,
        salient: select_salient(scored, config.t),
        fallback: false,
    })
}

pub fn run_isf_staged(
    image: &ImageRecord,
    refined: &[ScoredProposal],
    config: &PipelineConfig,
) -> Result<IsfStages> {
    let att = prepare_attention(image)?;
    filter_with_attention(refined, &att, config)
}

/// Always returns at least one mask.
pub fn run_isf(
    image: &ImageRecord,
    refined: &[ScoredProposal],
    config: &PipelineConfig,
) -> Result<Vec<SalientMask>> {
    Ok(run_isf_staged(image, refined, config)?.salient)
}
