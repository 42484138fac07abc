//! On-disk group format shared with the extractor.
//!
//! One directory per group:
//!
//! - `manifest.json`: group id and one entry per image, plus an optional
//!   config echo.
//! - `masks_<id>.json`: array of `{mask_id, predicted_iou, rle}`; `rle` is
//!   `{width, height, runs}` with row-major runs starting with background.
//! - `attention_<id>.f32`: little-endian f32, row-major, `rows * cols` values.
//! - `prototypes_<id>.f32`: little-endian f32, `K * d` row-major, with
//!   `prototypes_<id>.index.json` listing the `K` mask ids in row order.
//!
//! A run writes `prediction_<id>.png` files and `diagnostics.json` to its
//! output directory. In two-pass mode `prototype_requests.json` is written
//! into the group directory instead.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionMap;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::types::{
    GroupRecord, ImageRecord, MaskProposal, PrototypeVector, DEFAULT_PREDICTED_IOU,
    FALLBACK_MASK_ID,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REQUESTS_FILE: &str = "prototype_requests.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRef {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestImage {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub attention: AttentionRef,
    pub masks_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototypes_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototype_dim: Option<usize>,
}

impl ManifestImage {
    /// Standard file names for `image_id`.
    pub fn standard(image_id: &str, width: usize, height: usize, rows: usize, cols: usize) -> Self {
        Self {
            image_id: image_id.to_string(),
            width,
            height,
            attention: AttentionRef {
                file: attention_file(image_id),
                rows,
                cols,
            },
            masks_file: masks_file(image_id),
            prototypes_file: None,
            prototype_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub images: Vec<ManifestImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub mask_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_iou: Option<f64>,
    pub rle: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRequest {
    pub mask_id: String,
    pub rle: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequests {
    pub image_id: String,
    pub masks: Vec<MaskRequest>,
}

/// Masks that still need prototypes before matching can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeRequests {
    pub group_id: String,
    pub images: Vec<ImageRequests>,
}

pub fn masks_file(image_id: &str) -> String {
    format!("masks_{image_id}.json")
}

pub fn attention_file(image_id: &str) -> String {
    format!("attention_{image_id}.f32")
}

pub fn prototypes_file(image_id: &str) -> String {
    format!("prototypes_{image_id}.f32")
}

pub fn prediction_file(image_id: &str) -> String {
    format!("prediction_{image_id}.png")
}

/// Index file paired with a prototypes file.
pub fn index_file_for(prototypes: &str) -> String {
    let base = prototypes.strip_suffix(".f32").unwrap_or(prototypes);
    format!("{base}.index.json")
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::parse(path, field, e.into_inner().to_string())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::parse(path, "<root>", e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

pub fn read_masks(path: &Path) -> Result<Vec<MaskEntry>> {
    read_json(path)
}

pub fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(
            path,
            "<data>",
            format!("{} bytes is not a whole number of f32 values", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_attention(dir: &Path, entry: &AttentionRef) -> Result<AttentionMap> {
    let path = dir.join(&entry.file);
    let values = read_f32(&path)?;
    if values.len() != entry.rows * entry.cols {
        return Err(Error::parse(
            &path,
            "<data>",
            format!(
                "{} values, manifest declares {}x{}",
                values.len(),
                entry.rows,
                entry.cols
            ),
        ));
    }
    AttentionMap::new(
        entry.rows,
        entry.cols,
        values.into_iter().map(f64::from).collect(),
    )
    .map_err(|e| Error::parse(&path, "<data>", e.to_string()))
}

/// Prototype file of an image: the manifest entry, else the standard name if
/// it exists on disk.
pub fn prototype_path(dir: &Path, entry: &ManifestImage) -> Option<PathBuf> {
    match &entry.prototypes_file {
        Some(f) => Some(dir.join(f)),
        None => {
            let p = dir.join(prototypes_file(&entry.image_id));
            p.exists().then_some(p)
        }
    }
}

/// Reads `(mask_id, vector)` rows of one prototypes file.
pub fn read_prototypes(path: &Path, dim: Option<usize>) -> Result<Vec<(String, Vec<f32>)>> {
    let index_path = path.with_file_name(index_file_for(
        path.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default(),
    ));
    let ids: Vec<String> = read_json(&index_path)?;
    let values = read_f32(path)?;
    if ids.is_empty() {
        if values.is_empty() {
            return Ok(Vec::new());
        }
        return Err(Error::parse(
            path,
            "<data>",
            "values present but index is empty",
        ));
    }
    if values.len() % ids.len() != 0 {
        return Err(Error::parse(
            path,
            "<data>",
            format!(
                "{} values do not split into {} rows",
                values.len(),
                ids.len()
            ),
        ));
    }
    let d = values.len() / ids.len();
    if let Some(want) = dim {
        if want != d {
            return Err(Error::parse(
                path,
                "prototype_dim",
                format!("file holds d = {d}, manifest declares {want}"),
            ));
        }
    }
    if d == 0 {
        return Err(Error::parse(path, "<data>", "prototype dimension is 0"));
    }
    Ok(ids
        .into_iter()
        .zip(values.chunks_exact(d).map(<[f32]>::to_vec))
        .collect())
}

/// Writes a prototypes file and its index.
pub fn write_prototypes(dir: &Path, image_id: &str, rows: &[(String, Vec<f32>)]) -> Result<String> {
    let name = prototypes_file(image_id);
    let flat: Vec<f32> = rows.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    write_f32(&dir.join(&name), &flat)?;
    let ids: Vec<&str> = rows.iter().map(|(id, _)| id.as_str()).collect();
    write_json(&dir.join(index_file_for(&name)), &ids)?;
    Ok(name)
}

/// A group read from disk.
#[derive(Debug, Clone)]
pub struct LoadedGroup {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub group: GroupRecord,
}

fn load_image(dir: &Path, entry: &ManifestImage) -> Result<ImageRecord> {
    let masks_path = dir.join(&entry.masks_file);
    let masks = read_masks(&masks_path)?;
    let mut proposals = Vec::with_capacity(masks.len());
    for (i, m) in masks.into_iter().enumerate() {
        if m.rle.dims() != (entry.width, entry.height) {
            return Err(Error::parse(
                &masks_path,
                format!("[{i}].rle"),
                format!(
                    "mask is {:?}, image is {}x{}",
                    m.rle.dims(),
                    entry.width,
                    entry.height
                ),
            ));
        }
        let iou = m.predicted_iou.unwrap_or(DEFAULT_PREDICTED_IOU);
        proposals.push(MaskProposal::new(m.mask_id, m.rle, iou).map_err(|e| {
            Error::parse(&masks_path, format!("[{i}].predicted_iou"), e.to_string())
        })?);
    }
    let attention = read_attention(dir, &entry.attention)?;
    let mut prototypes = BTreeMap::new();
    if let Some(path) = prototype_path(dir, entry) {
        for (mask_id, v) in read_prototypes(&path, entry.prototype_dim)? {
            let vector = PrototypeVector::new(
                &entry.image_id,
                &mask_id,
                v.into_iter().map(f64::from).collect(),
            )
            .map_err(|e| Error::parse(&path, &mask_id, e.to_string()))?;
            prototypes.insert(mask_id, vector);
        }
    }
    ImageRecord::new(
        &entry.image_id,
        entry.width,
        entry.height,
        proposals,
        attention,
        prototypes,
    )
}

pub fn load_group(dir: &Path) -> Result<LoadedGroup> {
    let manifest = read_manifest(dir)?;
    let images = manifest
        .images
        .iter()
        .map(|entry| load_image(dir, entry))
        .collect::<Result<Vec<_>>>()?;
    let group = GroupRecord::new(&manifest.group_id, images)?;
    Ok(LoadedGroup {
        dir: dir.to_path_buf(),
        manifest,
        group,
    })
}

/// Writes a complete group directory.
pub fn write_group(
    dir: &Path,
    group: &GroupRecord,
    config_echo: Option<serde_json::Value>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(group.images.len());
    for img in &group.images {
        let att = &img.attention;
        let mut entry =
            ManifestImage::standard(&img.image_id, img.width, img.height, att.rows(), att.cols());
        let masks: Vec<MaskEntry> = img
            .proposals
            .iter()
            .map(|p| MaskEntry {
                mask_id: p.mask_id.clone(),
                predicted_iou: Some(p.predicted_iou),
                rle: p.mask.clone(),
            })
            .collect();
        write_json(&dir.join(&entry.masks_file), &masks)?;
        let values: Vec<f32> = att.values().iter().map(|&v| v as f32).collect();
        write_f32(&dir.join(&entry.attention.file), &values)?;
        if !img.prototypes.is_empty() {
            let rows: Vec<(String, Vec<f32>)> = img
                .proposals
                .iter()
                .map(|p| p.mask_id.as_str())
                .chain(std::iter::once(FALLBACK_MASK_ID))
                .filter_map(|id| img.prototypes.get(id))
                .map(|p| {
                    (
                        p.mask_id.clone(),
                        p.values.iter().map(|&v| v as f32).collect(),
                    )
                })
                .collect();
            entry.prototype_dim = rows.first().map(|(_, v)| v.len());
            entry.prototypes_file = Some(write_prototypes(dir, &img.image_id, &rows)?);
        }
        entries.push(entry);
    }
    let manifest = Manifest {
        group_id: group.group_id.clone(),
        config: config_echo,
        images: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let pixels: Vec<u8> = mask
        .decode()
        .into_iter()
        .map(|b| if b { 255 } else { 0 })
        .collect();
    let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, pixels)
        .expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Reads a PNG as a mask; pixels >= 128 are foreground.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    let raster: Vec<bool> = img.as_raw().iter().map(|&p| p >= 128).collect();
    BinaryMask::encode(w as usize, h as usize, &raster)
}

/// Schema check of a group directory. Returns every problem found.
pub fn validate_dir(dir: &Path) -> Vec<String> {
    let mut problems = Vec::new();
    let manifest = match read_manifest(dir) {
        Ok(m) => m,
        Err(e) => return vec![e.to_string()],
    };
    if manifest.images.is_empty() {
        problems.push("manifest lists no images".to_string());
    }
    let mut image_ids = HashSet::new();
    let mut group_dim: Option<usize> = None;
    for entry in &manifest.images {
        let id = &entry.image_id;
        if !image_ids.insert(id.clone()) {
            problems.push(format!("duplicate image_id `{id}`"));
        }
        if entry.width == 0 || entry.height == 0 {
            problems.push(format!("image `{id}`: zero dimension"));
        }
        if let Err(e) = read_attention(dir, &entry.attention) {
            problems.push(format!("image `{id}`: {e}"));
        }
        let masks_path = dir.join(&entry.masks_file);
        let mut mask_ids = HashSet::new();
        match read_masks(&masks_path) {
            Ok(masks) => {
                for (i, m) in masks.iter().enumerate() {
                    if !mask_ids.insert(m.mask_id.clone()) {
                        problems.push(format!("image `{id}`: duplicate mask_id `{}`", m.mask_id));
                    }
                    if m.rle.dims() != (entry.width, entry.height) {
                        problems.push(format!(
                            "image `{id}`: mask [{i}] `{}` is {:?}, image is {}x{}",
                            m.mask_id,
                            m.rle.dims(),
                            entry.width,
                            entry.height
                        ));
                    }
                    if let Some(iou) = m.predicted_iou {
                        if !(0.0..=1.0).contains(&iou) {
                            problems.push(format!(
                                "image `{id}`: mask `{}` predicted_iou {iou} outside [0, 1]",
                                m.mask_id
                            ));
                        }
                    }
                }
            }
            Err(e) => problems.push(format!("image `{id}`: {e}")),
        }
        if let Some(path) = prototype_path(dir, entry) {
            match read_prototypes(&path, entry.prototype_dim) {
                Ok(rows) => {
                    let mut seen = HashSet::new();
                    for (mask_id, v) in &rows {
                        if !seen.insert(mask_id.clone()) {
                            problems.push(format!("image `{id}`: duplicate prototype `{mask_id}`"));
                        }
                        if !mask_ids.contains(mask_id) && mask_id != FALLBACK_MASK_ID {
                            problems.push(format!(
                                "image `{id}`: prototype for unknown mask `{mask_id}`"
                            ));
                        }
                        if v.iter().any(|x| !x.is_finite()) || v.iter().all(|&x| x == 0.0) {
                            problems.push(format!(
                                "image `{id}`: prototype `{mask_id}` is zero or non-finite"
                            ));
                        }
                        match group_dim {
                            None => group_dim = Some(v.len()),
                            Some(d) if d != v.len() => problems.push(format!(
                                "image `{id}`: prototype dimension {} differs from group dimension {d}",
                                v.len()
                            )),
                            _ => {}
                        }
                    }
                }
                Err(e) => problems.push(format!("image `{id}`: {e}")),
            }
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_group() -> GroupRecord {
        let mask = BinaryMask::encode(3, 2, &[true, false, true, true, true, false]).unwrap();
        let att = AttentionMap::new(1, 2, vec![0.25, 0.75]).unwrap();
        let mut protos = BTreeMap::new();
        protos.insert(
            "m0".to_string(),
            PrototypeVector::new("a", "m0", vec![1.0, 0.5]).unwrap(),
        );
        let img = ImageRecord::new(
            "a",
            3,
            2,
            vec![MaskProposal::new("m0", mask, 0.75).unwrap()],
            att,
            protos,
        )
        .unwrap();
        GroupRecord::new("g", vec![img]).unwrap()
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let group = sample_group();
        write_group(dir.path(), &group, None).unwrap();
        assert!(validate_dir(dir.path()).is_empty());
        let loaded = load_group(dir.path()).unwrap();
        let img = &loaded.group.images[0];
        assert_eq!(img.proposals, group.images[0].proposals);
        assert_eq!(img.attention, group.images[0].attention);
        assert_eq!(img.prototype("m0").unwrap(), &[1.0, 0.5]);
        assert_eq!(loaded.manifest.images[0].prototype_dim, Some(2));
    }

    #[test]
    fn attention_bytes_are_little_endian_row_major() {
        let dir = tempfile::tempdir().unwrap();
        write_group(dir.path(), &sample_group(), None).unwrap();
        let bytes = fs::read(dir.path().join("attention_a.f32")).unwrap();
        let mut want = 0.25f32.to_le_bytes().to_vec();
        want.extend(0.75f32.to_le_bytes());
        assert_eq!(bytes, want);
        let masks = fs::read_to_string(dir.path().join("masks_a.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&masks).unwrap();
        assert_eq!(v[0]["rle"]["runs"], serde_json::json!([0, 1, 1, 3, 1]));
    }

    #[test]
    fn missing_iou_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write_group(dir.path(), &sample_group(), None).unwrap();
        fs::write(
            dir.path().join("masks_a.json"),
            r#"[{"mask_id":"m0","rle":{"width":3,"height":2,"runs":[6]}}]"#,
        )
        .unwrap();
        let g = load_group(dir.path()).unwrap();
        assert_eq!(g.group.images[0].proposals[0].predicted_iou, 0.5);
    }

    #[test]
    fn malformed_manifest_names_file_and_field() {
        let dir = tempfile::tempdir().unwrap();
        write_group(dir.path(), &sample_group(), None).unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"{"group_id":"g","images":[{"image_id":"a","width":"three"}]}"#,
        )
        .unwrap();
        match load_group(dir.path()) {
            Err(Error::Parse { file, field, .. }) => {
                assert!(file.ends_with(MANIFEST_FILE));
                assert_eq!(field, "images[0].width");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert_eq!(validate_dir(dir.path()).len(), 1);
    }

    #[test]
    fn validate_reports_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        write_group(dir.path(), &sample_group(), None).unwrap();
        fs::write(dir.path().join("attention_a.f32"), [0u8; 4]).unwrap();
        fs::write(
            dir.path().join("masks_a.json"),
            r#"[{"mask_id":"m0","predicted_iou":1.5,"rle":{"width":2,"height":3,"runs":[6]}}]"#,
        )
        .unwrap();
        let problems = validate_dir(dir.path());
        assert_eq!(problems.len(), 3, "{problems:?}");
    }

    #[test]
    fn prototype_file_at_standard_name_is_found() {
        let dir = tempfile::tempdir().unwrap();
        let mut group = sample_group();
        group.images[0].prototypes.clear();
        write_group(dir.path(), &group, None).unwrap();
        assert!(load_group(dir.path()).unwrap().group.images[0]
            .prototypes
            .is_empty());
        write_prototypes(dir.path(), "a", &[("m0".into(), vec![0.0, 2.0])]).unwrap();
        let g = load_group(dir.path()).unwrap();
        assert_eq!(g.group.images[0].prototype("m0").unwrap(), &[0.0, 2.0]);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = sample_group().images[0].proposals[0].mask.clone();
        let path = dir.path().join("m.png");
        write_mask_png(&path, &mask).unwrap();
        assert_eq!(read_mask_png(&path).unwrap(), mask);
    }
}
