//! Exit-code and report-format checks for the `boxaug` binary.

use boxaug::dataset_io::{save_dataset, StorageFormat};
use boxaug::geometry::ImageExtent;
use boxaug_fixtures::{synth_dataset, OverlapPolicy};
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn boxaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxaug"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn materialize(dir: &Path, n: usize) -> (String, String) {
    let mut ds = synth_dataset(
        n,
        ImageExtent::new(48, 40),
        &["knife", "scissor"],
        5,
        OverlapPolicy::Isolated,
    );
    save_dataset(&mut ds, dir, StorageFormat::Png).unwrap();
    (
        dir.join("annotations.json").display().to_string(),
        dir.join("images").display().to_string(),
    )
}

fn write_perfect_detections(ann_path: &str, det_path: &Path) {
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(ann_path).unwrap()).unwrap();
    let dets: Vec<serde_json::Value> = doc["annotations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            serde_json::json!({
                "image_id": a["image_id"],
                "category_id": a["category_id"],
                "bbox": a["bbox"],
                "score": 0.99,
            })
        })
        .collect();
    std::fs::write(det_path, serde_json::to_vec(&dets).unwrap()).unwrap();
}

#[test]
fn eval_on_perfect_detections_reports_full_map() {
    let dir = TempDir::new().unwrap();
    let (ann, _) = materialize(dir.path(), 4);
    let dets = dir.path().join("dets.json");
    write_perfect_detections(&ann, &dets);
    let meta = dir.path().join("meta.json");
    std::fs::write(&meta, r#"{"name": "m", "parameter_count_millions": 25.0}"#).unwrap();

    let out = boxaug(&[
        "eval",
        "--gt",
        &ann,
        "--dets",
        dets.to_str().unwrap(),
        "--meta",
        meta.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["map"], serde_json::json!(100.0));
    assert_eq!(report["map_over_c"], serde_json::json!(4.0));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = boxaug(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = boxaug(&["eval", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn augment_refuses_to_run_without_a_seed() {
    let dir = TempDir::new().unwrap();
    let (ann, images) = materialize(dir.path(), 3);
    let config = dir.path().join("cfg.toml");
    std::fs::write(&config, "[[specs]]\nkind = \"Equalise\"\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = boxaug(&[
        "augment",
        "--config",
        config.to_str().unwrap(),
        "--in",
        &ann,
        "--images",
        &images,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // The same invocation with --seed succeeds.
    let out = boxaug(&[
        "augment",
        "--config",
        config.to_str().unwrap(),
        "--in",
        &ann,
        "--images",
        &images,
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("run-manifest.json").exists());
    assert!(out_dir.join("provenance.json").exists());
}

#[test]
fn validate_reports_problems_with_exit_one() {
    let dir = TempDir::new().unwrap();
    let ann = dir.path().join("bad.json");
    std::fs::write(
        &ann,
        r#"{
            "images": [{"id": 1, "file_name": "missing.png", "width": 10, "height": 10}],
            "annotations": [],
            "categories": []
        }"#,
    )
    .unwrap();
    let out = boxaug(&[
        "validate",
        "--in",
        ann.to_str().unwrap(),
        "--images",
        dir.path().to_str().unwrap(),
        "--strict",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["valid"], serde_json::json!(false));

    let (good_ann, good_images) = materialize(&dir.path().join("good"), 2);
    let out = boxaug(&[
        "validate",
        "--in",
        &good_ann,
        "--images",
        &good_images,
        "--strict",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn compress_rejects_out_of_range_levels() {
    let dir = TempDir::new().unwrap();
    let (ann, images) = materialize(dir.path(), 2);
    let out = boxaug(&[
        "compress",
        "--levels",
        "95,0",
        "--in",
        &ann,
        "--images",
        &images,
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn eval_with_unknown_image_reference_fails_validation() {
    let dir = TempDir::new().unwrap();
    let (ann, _) = materialize(dir.path(), 2);
    let dets = dir.path().join("dets.json");
    std::fs::write(
        &dets,
        r#"[{"image_id": "ghost", "category_id": 1, "bbox": [1, 1, 4, 4], "score": 0.5}]"#,
    )
    .unwrap();
    let meta = dir.path().join("meta.json");
    std::fs::write(&meta, r#"{"name": "m", "parameter_count_millions": 10.0}"#).unwrap();
    let out = boxaug(&[
        "eval",
        "--gt",
        &ann,
        "--dets",
        dets.to_str().unwrap(),
        "--meta",
        meta.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stats_emits_parseable_canonical_json() {
    let dir = TempDir::new().unwrap();
    let (ann, _) = materialize(dir.path(), 5);
    let out = boxaug(&["stats", "--in", &ann]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["samples"], serde_json::json!(5));
    assert!(report["class_histogram"].is_object());
    assert!(report["objects_per_image"].is_object());
}
