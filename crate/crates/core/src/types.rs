use std::collections::{BTreeMap, HashSet};

use crate::attention::AttentionMap;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Confidence assigned to proposals that arrive without a predicted IoU.
pub const DEFAULT_PREDICTED_IOU: f64 = 0.5;

/// Mask id reserved for the attention-derived fallback candidate.
pub const FALLBACK_MASK_ID: &str = "fallback";

/// One class-agnostic segment candidate with the generator's confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskProposal {
    pub mask_id: String,
    pub mask: BinaryMask,
    pub predicted_iou: f64,
}

impl MaskProposal {
    pub fn new(mask_id: impl Into<String>, mask: BinaryMask, predicted_iou: f64) -> Result<Self> {
        let mask_id = mask_id.into();
        if !(0.0..=1.0).contains(&predicted_iou) {
            return Err(Error::Ingestion(format!(
                "mask `{mask_id}`: predicted_iou {predicted_iou} outside [0, 1]"
            )));
        }
        Ok(Self {
            mask_id,
            mask,
            predicted_iou,
        })
    }
}

/// Semantic descriptor of one masked region.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeVector {
    pub image_id: String,
    pub mask_id: String,
    pub values: Vec<f64>,
}

impl PrototypeVector {
    pub fn new(
        image_id: impl Into<String>,
        mask_id: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        let mask_id = mask_id.into();
        if values.is_empty() {
            return Err(Error::Ingestion(format!(
                "prototype `{image_id}/{mask_id}` has dimension 0"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Ingestion(format!(
                "prototype `{image_id}/{mask_id}` has non-finite values"
            )));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::Ingestion(format!(
                "prototype `{image_id}/{mask_id}` is the zero vector"
            )));
        }
        Ok(Self {
            image_id,
            mask_id,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One image of a group together with everything the pipeline consumes.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub proposals: Vec<MaskProposal>,
    pub attention: AttentionMap,
    pub prototypes: BTreeMap<String, PrototypeVector>,
}

impl ImageRecord {
    pub fn new(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        proposals: Vec<MaskProposal>,
        attention: AttentionMap,
        prototypes: BTreeMap<String, PrototypeVector>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        if width == 0 || height == 0 {
            return Err(Error::Dimension { width, height });
        }
        let mut seen = HashSet::new();
        for p in &proposals {
            if p.mask.dims() != (width, height) {
                return Err(Error::DimensionMismatch {
                    left: p.mask.dims(),
                    right: (width, height),
                });
            }
            if !seen.insert(p.mask_id.as_str()) {
                return Err(Error::Ingestion(format!(
                    "image `{image_id}`: duplicate mask_id `{}`",
                    p.mask_id
                )));
            }
        }
        for key in prototypes.keys() {
            if !seen.contains(key.as_str()) && key != FALLBACK_MASK_ID {
                return Err(Error::Ingestion(format!(
                    "image `{image_id}`: prototype for unknown mask_id `{key}`"
                )));
            }
        }
        Ok(Self {
            image_id,
            width,
            height,
            proposals,
            attention,
            prototypes,
        })
    }

    pub fn proposal(&self, mask_id: &str) -> Option<&MaskProposal> {
        self.proposals.iter().find(|p| p.mask_id == mask_id)
    }
}

/// A group of images sharing one co-salient category.
#[derive(Debug, Clone)]
pub struct GroupRecord {
    pub group_id: String,
    pub images: Vec<ImageRecord>,
}

impl GroupRecord {
    pub fn new(group_id: impl Into<String>, images: Vec<ImageRecord>) -> Result<Self> {
        let group_id = group_id.into();
        if images.is_empty() {
            return Err(Error::Ingestion(format!(
                "group `{group_id}` has no images"
            )));
        }
        let mut seen = HashSet::new();
        for img in &images {
            if !seen.insert(img.image_id.as_str()) {
                return Err(Error::Ingestion(format!(
                    "group `{group_id}`: duplicate image_id `{}`",
                    img.image_id
                )));
            }
        }
        let mut dims = images
            .iter()
            .flat_map(|img| img.prototypes.values().map(PrototypeVector::dim));
        if let Some(d) = dims.next() {
            if dims.any(|other| other != d) {
                return Err(Error::Ingestion(format!(
                    "group `{group_id}`: prototypes have inconsistent dimensions"
                )));
            }
        }
        Ok(Self { group_id, images })
    }
}
