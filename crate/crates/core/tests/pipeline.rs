use std::collections::BTreeMap;
use std::path::Path;

use cosal_core::interchange::{self, PrototypeRequests, REQUESTS_FILE};
use cosal_core::pipeline::{predict_group, run_group, Mode, RunOutcome};
use cosal_core::synth::{generate_group, write_synth_group, SynthConfig, SynthGroup};
use cosal_core::viz;
use cosal_core::{Error, GroupRecord, ImageRecord, PipelineConfig};

fn synth(seed: u64) -> (SynthConfig, SynthGroup) {
    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let group = generate_group("g", &cfg).unwrap();
    (cfg, group)
}

fn without_prototypes(group: &GroupRecord) -> GroupRecord {
    let images = group
        .images
        .iter()
        .map(|img| {
            ImageRecord::new(
                &img.image_id,
                img.width,
                img.height,
                img.proposals.clone(),
                img.attention.clone(),
                BTreeMap::new(),
            )
            .unwrap()
        })
        .collect();
    GroupRecord::new(&group.group_id, images).unwrap()
}

fn predictions(dir: &Path, group: &GroupRecord) -> Vec<Vec<u8>> {
    group
        .images
        .iter()
        .map(|img| std::fs::read(dir.join(interchange::prediction_file(&img.image_id))).unwrap())
        .collect()
}

#[test]
fn two_pass_requests_then_matches_oneshot() {
    let (_, full) = synth(5);
    let tmp = tempfile::tempdir().unwrap();
    let config = PipelineConfig::default();

    let full_dir = tmp.path().join("full");
    interchange::write_group(&full_dir, &full.group, None).unwrap();
    let oneshot_out = tmp.path().join("oneshot");
    run_group(&full_dir, &oneshot_out, &config, Mode::Oneshot).unwrap();

    let bare_dir = tmp.path().join("bare");
    interchange::write_group(&bare_dir, &without_prototypes(&full.group), None).unwrap();
    let out = tmp.path().join("two_pass");
    let requests = match run_group(&bare_dir, &out, &config, Mode::TwoPass).unwrap() {
        RunOutcome::PrototypesRequested(r) => r,
        RunOutcome::Completed(_) => panic!("completed without prototypes"),
    };
    assert!(!out.exists(), "no predictions before prototypes arrive");
    let on_disk: PrototypeRequests =
        serde_json::from_slice(&std::fs::read(bare_dir.join(REQUESTS_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, requests);
    assert_eq!(requests.images.len(), full.group.images.len());

    // answer exactly the requested masks
    for req in &requests.images {
        let img = full
            .group
            .images
            .iter()
            .find(|i| i.image_id == req.image_id)
            .unwrap();
        let rows: Vec<(String, Vec<f32>)> = req
            .masks
            .iter()
            .map(|m| {
                let v = img.prototype(&m.mask_id).unwrap();
                (m.mask_id.clone(), v.iter().map(|&x| x as f32).collect())
            })
            .collect();
        interchange::write_prototypes(&bare_dir, &req.image_id, &rows).unwrap();
    }
    match run_group(&bare_dir, &out, &config, Mode::TwoPass).unwrap() {
        RunOutcome::Completed(_) => {}
        RunOutcome::PrototypesRequested(r) => panic!("still missing {r:?}"),
    }
    assert_eq!(
        predictions(&out, &full.group),
        predictions(&oneshot_out, &full.group)
    );
}

#[test]
fn oneshot_without_prototypes_is_incomplete_input() {
    let (_, full) = synth(6);
    let tmp = tempfile::tempdir().unwrap();
    interchange::write_group(tmp.path(), &without_prototypes(&full.group), None).unwrap();
    let err = run_group(
        tmp.path(),
        &tmp.path().join("out"),
        &PipelineConfig::default(),
        Mode::Oneshot,
    )
    .unwrap_err();
    assert!(matches!(err, Error::IncompleteInput { .. }), "{err}");
}

#[test]
fn malformed_manifest_names_file_and_field() {
    let (_, full) = synth(7);
    let tmp = tempfile::tempdir().unwrap();
    interchange::write_group(tmp.path(), &full.group, None).unwrap();
    let path = tmp.path().join(interchange::MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(
        &path,
        text.replacen("\"height\": 96", "\"height\": \"tall\"", 1),
    )
    .unwrap();
    match run_group(
        tmp.path(),
        &tmp.path().join("out"),
        &PipelineConfig::default(),
        Mode::Oneshot,
    ) {
        Err(Error::Parse { file, field, .. }) => {
            assert_eq!(file, path);
            assert_eq!(field, "images[0].height");
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn stage_nesting_holds_across_seeds() {
    for seed in 0..10 {
        let (_, g) = synth(seed);
        for t in [1, 3, 6] {
            let config = PipelineConfig {
                t,
                ..PipelineConfig::default()
            };
            let pred = predict_group(&g.group, &config).unwrap();
            pred.report.check_nesting().unwrap();
            assert_eq!(pred.results.len(), g.group.images.len());
        }
    }
}

#[test]
fn diagnostics_serialize_nine_significant_digits() {
    let (cfg, g) = synth(8);
    let tmp = tempfile::tempdir().unwrap();
    write_synth_group(tmp.path(), &g, &cfg).unwrap();
    let out = tmp.path().join("out");
    run_group(tmp.path(), &out, &PipelineConfig::default(), Mode::Oneshot).unwrap();
    let diag: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join(interchange::DIAGNOSTICS_FILE)).unwrap())
            .unwrap();
    let mut floats = Vec::new();
    fn collect(v: &serde_json::Value, out: &mut Vec<f64>) {
        match v {
            serde_json::Value::Number(n) if n.is_f64() => out.push(n.as_f64().unwrap()),
            serde_json::Value::Array(a) => a.iter().for_each(|x| collect(x, out)),
            serde_json::Value::Object(o) => o.values().for_each(|x| collect(x, out)),
            _ => {}
        }
    }
    collect(&diag["deterministic"], &mut floats);
    assert!(!floats.is_empty());
    for f in floats {
        assert_eq!(cosal_core::pipeline::sig9(f), f);
    }
    assert!(diag["volatile"]["total_ms"].is_number());
}

#[test]
fn viz_outline_tracks_planted_object() {
    let (cfg, g) = synth(9);
    let tmp = tempfile::tempdir().unwrap();
    let group_dir = tmp.path().join("group");
    write_synth_group(&group_dir, &g, &cfg).unwrap();
    let out = tmp.path().join("out");
    run_group(&group_dir, &out, &PipelineConfig::default(), Mode::Oneshot).unwrap();
    let viz_dir = tmp.path().join("viz");
    let summary = viz::viz_group(&group_dir, &out, &viz_dir, None).unwrap();
    assert!(summary.warnings.is_empty(), "{:?}", summary.warnings);
    assert_eq!(summary.written.len(), g.group.images.len());
    for (img, gt) in g.group.images.iter().zip(&g.gt) {
        let overlay = image::open(viz_dir.join(viz::overlay_file(&img.image_id)))
            .unwrap()
            .into_rgb8();
        let tinted = viz::tinted_pixels(&overlay);
        let truth = gt.decode();
        let inter = tinted
            .iter()
            .zip(&truth)
            .filter(|(a, b)| **a && **b)
            .count();
        let union = tinted
            .iter()
            .zip(&truth)
            .filter(|(a, b)| **a || **b)
            .count();
        let iou = inter as f64 / union as f64;
        assert!(iou >= 0.9, "{}: overlay IoU {iou}", img.image_id);
    }
}

#[test]
fn viz_warns_on_missing_prediction() {
    let (cfg, g) = synth(10);
    let tmp = tempfile::tempdir().unwrap();
    write_synth_group(tmp.path(), &g, &cfg).unwrap();
    let empty = tmp.path().join("none");
    std::fs::create_dir_all(&empty).unwrap();
    let summary = viz::viz_group(tmp.path(), &empty, &tmp.path().join("viz"), None).unwrap();
    assert!(summary.written.is_empty());
    assert_eq!(summary.warnings.len(), g.group.images.len());
}
