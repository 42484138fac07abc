//! Brute-force reference implementations used to cross-check the pipeline.
//!
//! These work on decoded pixel rasters and explicit loops, sharing no code
//! with the production stages beyond the input types.

use crate::config::PipelineConfig;
use crate::types::MaskProposal;

/// Ids of the proposals that survive containment filtering, ascending.
///
/// A proposal is removed when some strictly larger surviving proposal (by
/// area, then ascending id) covers at least `tau_con` of its pixels.
pub fn oracle_overlap_filter(proposals: &[MaskProposal], tau_con: f64) -> Vec<String> {
    let rasters: Vec<Vec<bool>> = proposals.iter().map(|p| p.mask.decode()).collect();
    let areas: Vec<usize> = rasters
        .iter()
        .map(|r| r.iter().filter(|&&b| b).count())
        .collect();
    let larger = |a: usize, b: usize| {
        areas[a] > areas[b] || (areas[a] == areas[b] && proposals[a].mask_id < proposals[b].mask_id)
    };
    let live: Vec<usize> = (0..proposals.len()).filter(|&i| areas[i] > 0).collect();

    // each decision depends only on strictly larger masks, so memoized
    // recursion terminates
    let mut kept: Vec<Option<bool>> = vec![None; proposals.len()];
    fn decide(
        i: usize,
        live: &[usize],
        rasters: &[Vec<bool>],
        areas: &[usize],
        larger: &dyn Fn(usize, usize) -> bool,
        tau_con: f64,
        kept: &mut Vec<Option<bool>>,
    ) -> bool {
        if let Some(k) = kept[i] {
            return k;
        }
        let mut keep = true;
        for &j in live {
            if j == i || !larger(j, i) {
                continue;
            }
            let inter = rasters[i]
                .iter()
                .zip(&rasters[j])
                .filter(|(a, b)| **a && **b)
                .count();
            if inter as f64 / areas[i] as f64 >= tau_con
                && decide(j, live, rasters, areas, larger, tau_con, kept)
            {
                keep = false;
                break;
            }
        }
        kept[i] = Some(keep);
        keep
    }
    let mut out: Vec<String> = live
        .iter()
        .filter(|&&i| decide(i, &live, &rasters, &areas, &larger, tau_con, &mut kept))
        .map(|&i| proposals[i].mask_id.clone())
        .collect();
    out.sort();
    out
}

/// Refined proposal ids, best first, for one image's raw proposals.
pub fn oracle_qmg(proposals: &[MaskProposal], config: &PipelineConfig) -> Vec<String> {
    let ratio = |p: &MaskProposal| {
        let r = p.mask.decode();
        r.iter().filter(|&&b| b).count() as f64 / r.len() as f64
    };
    let coarse: Vec<MaskProposal> = proposals
        .iter()
        .filter(|p| {
            let r = ratio(p);
            r > 0.0 && r >= config.tau_area
        })
        .cloned()
        .collect();
    let survivors = oracle_overlap_filter(&coarse, config.tau_con);
    let mut scored: Vec<(f64, String)> = coarse
        .iter()
        .filter(|p| survivors.contains(&p.mask_id))
        .map(|p| {
            let r = ratio(p);
            let s_area = if r < config.r_min {
                r / config.r_min
            } else if r <= config.r_max {
                1.0
            } else {
                let penalized = 1.0 - (r - config.r_max) * config.gamma;
                if penalized > config.sigma {
                    penalized
                } else {
                    config.sigma
                }
            };
            (
                config.alpha * p.predicted_iou + config.beta * s_area,
                p.mask_id.clone(),
            )
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(config.t_r)
        .map(|(_, id)| id)
        .collect()
}

/// Selected candidate rank per image from raw per-image `(mask_id, vector)`
/// lists, by explicit triple loop. `None` for images without candidates.
///
/// Vectors are L2-normalized here; ties on score go to the lower rank.
pub fn oracle_ips(images: &[Vec<(String, Vec<f64>)>]) -> Vec<Option<usize>> {
    let unit: Vec<Vec<Vec<f64>>> = images
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|(_, v)| {
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter().map(|x| x / norm).collect()
                })
                .collect()
        })
        .collect();

    let mut picks = Vec::with_capacity(images.len());
    for n in 0..images.len() {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..unit[n].len() {
            let mut total = 0.0;
            for m in 0..images.len() {
                if m == n || unit[m].is_empty() {
                    continue;
                }
                let mut top = f64::NEG_INFINITY;
                for u in &unit[m] {
                    let mut d = 0.0;
                    for k in 0..u.len() {
                        d += unit[n][t][k] * u[k];
                    }
                    if d > top {
                        top = d;
                    }
                }
                total += top;
            }
            // strict comparison while scanning ranks upward keeps the lowest
            // rank on ties; ranks are unique so ids never decide
            if best.is_none_or(|(_, s)| total > s) {
                best = Some((t, total));
            }
        }
        picks.push(best.map(|(t, _)| t));
    }
    picks
}
