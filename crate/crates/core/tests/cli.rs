mod common;

use std::path::Path;
use std::process::Command;

use serde_json::Value;

use common::{args, fixture, path_str, read_tree, write_scenes};
use vanish::cli::main_with_args;
use vanish::evalharness::{DiffReport, EvalReport};
use vanish::imagecore::io::decode_image;
use vanish::segmask::{CocoDataset, Palette, SegmentationMask};

fn run(parts: &[&str]) -> i32 {
    main_with_args(args(parts))
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn attack_bundle_echoes_config_with_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_scenes(tmp.path());
    let out = tmp.path().join("out");
    let config = tmp.path().join("attack.json");
    let doc = serde_json::json!({
        "schema_version": 1,
        "inputs": [path_str(&inputs[0])],
        "annotations": {"coco": path_str(&fixture("coco_instances.json"))},
        "target_label": 18,
        "output_dir": path_str(&out),
        "eta": 2.0,
        "step": 3
    });
    std::fs::write(&config, doc.to_string()).unwrap();

    let code = run(&["attack", "--config", &path_str(&config), "--eta", "1.5", "--reconstruction-class", "1"]);
    assert_eq!(code, 0);

    let files: Vec<String> = read_tree(&out).into_iter().map(|(name, _)| name).collect();
    assert_eq!(
        files,
        [
            "run_manifest.json",
            "scene16/adv.png",
            "scene16/perturbation.json",
            "scene16/reconstruction.csv",
            "scene16/replacement_plan.json",
        ]
    );
    let manifest = json(&out.join("run_manifest.json"));
    let cfg = &manifest["config"];
    assert_eq!(cfg["eta"], 1.5);
    assert_eq!(cfg["step"], 3);
    assert_eq!(cfg["reconstruction_class"], 1);
    assert_eq!(cfg["epsilon"], 0.25);
    assert_eq!(cfg["m"], 10);
    assert_eq!(cfg["seed"], 1);
    assert_eq!(manifest["reconstruction"]["reached_target"], true);
    assert!(manifest["images"][0]["perturbation_l2"].as_f64().unwrap() <= 1.5);

    let plan = json(&out.join("scene16/replacement_plan.json"));
    assert_eq!(plan["step"], 3);
    let hash = manifest["images"][0]["outputs"]["adv.png"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
}

#[test]
fn absent_target_fails_at_locate_and_keeps_a_failure_record() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_scenes(tmp.path());
    let out = tmp.path().join("out");
    let code = run(&[
        "attack",
        "-i",
        &path_str(&inputs[0]),
        "--coco",
        &path_str(&fixture("coco_instances.json")),
        "--target-label",
        "1",
        "-o",
        &path_str(&out),
    ]);
    assert_eq!(code, 1);
    let failure = json(&out.join("scene16/failure.json"));
    assert_eq!(failure["stage"], "locate");
    assert!(failure["message"].as_str().unwrap().starts_with("target not found"));
    assert!(!out.join("scene16/adv.png").exists());
    let manifest = json(&out.join("run_manifest.json"));
    assert_eq!(manifest["images"][0]["status"], "failed");
}

#[test]
fn missing_input_exits_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.png");
    let output = Command::new(env!("CARGO_BIN_EXE_vanish"))
        .args(["attack", "-i", &path_str(&missing), "--coco", &path_str(&fixture("coco_instances.json"))])
        .args(["--target-label", "18", "-o", &path_str(&out)])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err: Value = serde_json::from_slice(output.stderr.trim_ascii()).unwrap();
    assert_eq!(err["stage"], "load");
    assert_eq!(err["file"], path_str(&missing));
    assert!(err["message"].is_string());
    assert!(!out.exists());
}

#[test]
fn config_and_usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let base = ["attack", "-i", "a.png", "--coco", "c.json", "--target-label", "18", "-o"];
    let with = |extra: &[&str]| {
        let mut v: Vec<&str> = base.to_vec();
        let o = path_str(&out);
        v.push(&o);
        v.extend_from_slice(extra);
        run(&v)
    };
    assert_eq!(with(&["--epsilon", "1.5"]), 2);
    assert_eq!(with(&["--lambda1", "0.9"]), 2);
    assert_eq!(with(&["--n", "3", "--m", "4", "--stride", "2"]), 2);
    assert_eq!(with(&["--update-rule", "sideways"]), 2);
    assert_eq!(run(&["attack", "--bogus"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);

    let config = tmp.path().join("bad.json");
    std::fs::write(&config, r#"{"schema_version": 1, "etaa": 3}"#).unwrap();
    assert_eq!(run(&["attack", "--config", &path_str(&config)]), 2);
    std::fs::write(&config, r#"{"schema_version": 7}"#).unwrap();
    assert_eq!(with(&["--config", &path_str(&config)]), 2);
    assert!(!out.exists());
}

fn eval(origin: &str, adv: &str, out: &Path) -> i32 {
    run(&[
        "eval",
        "--gt",
        &path_str(&fixture("coco_instances.json")),
        "--origin",
        &path_str(&fixture(origin)),
        "--adv",
        &path_str(&fixture(adv)),
        "-o",
        &path_str(out),
    ])
}

fn reports(out: &Path) -> (DiffReport, EvalReport, EvalReport) {
    let read = |name: &str| std::fs::read(out.join(name)).unwrap();
    (
        serde_json::from_slice(&read("diff_report.json")).unwrap(),
        serde_json::from_slice(&read("eval_origin.json")).unwrap(),
        serde_json::from_slice(&read("eval_adv.json")).unwrap(),
    )
}

#[test]
fn eval_self_diff_is_empty() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(eval("coco_results_origin.json", "coco_results_origin.json", tmp.path()), 0);
    let (diff, origin, adv) = reports(tmp.path());
    assert_eq!((diff.new_labels, diff.disappeared_labels), (0, 0));
    assert_eq!(diff.bbox_count_origin, diff.bbox_count_adv);
    assert_eq!(origin, adv);
    assert!(tmp.path().join("report.txt").exists());
}

/// Dog on image 1 turns into a low-score cat; the dog on image 2 drops below
/// the threshold. Per-category AP: person 1, dog 51/101 (recall 1/2 with
/// precision 1 on the first 51 recall points), cat has no ground truth.
#[test]
fn eval_fixture_pair_matches_hand_trace() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(eval("coco_results_origin.json", "coco_results_adv.json", tmp.path()), 0);
    let (diff, origin, adv) = reports(tmp.path());
    assert_eq!(
        (diff.bbox_count_origin, diff.bbox_count_adv, diff.new_labels, diff.disappeared_labels),
        (3, 2, 1, 2)
    );
    assert!((origin.map - 1.0).abs() <= 1e-9);
    assert!((origin.ar - 1.0).abs() <= 1e-9);
    let dog = 51.0 / 101.0;
    assert!((adv.map - (1.0 + dog) / 2.0).abs() <= 1e-9);
    assert!((adv.ap50 - (1.0 + dog) / 2.0).abs() <= 1e-9);
    assert!((adv.ar - 0.75).abs() <= 1e-9);
    assert_eq!(adv.skipped_categories, vec![17]);

    let text = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(text.contains("Number of disappearing labels"));
    assert!(text.contains("mAP@[.50:.95]"));
}

#[test]
fn eval_orphan_ids_are_reported_and_excluded() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(eval("coco_results_orphan.json", "coco_results_origin.json", tmp.path()), 0);
    let (diff, origin, _) = reports(tmp.path());
    assert_eq!(origin.orphan_images, vec![9, 12]);
    assert!(origin.warnings.iter().any(|w| w.contains("[9, 12]")));
    assert_eq!(diff.bbox_count_origin, 1);
    assert!(diff.per_image.iter().all(|d| d.image_id == 1 || d.image_id == 2));
}

#[test]
fn eval_rejects_bad_records() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"[{"image_id": 1, "category_id": 18, "bbox": [0, 0, 0, 4], "score": 0.5}]"#).unwrap();
    let code = run(&[
        "eval",
        "--gt",
        &path_str(&fixture("coco_instances.json")),
        "--origin",
        &path_str(&bad),
        "--adv",
        &path_str(&fixture("coco_results_adv.json")),
        "-o",
        &path_str(&tmp.path().join("out")),
    ]);
    assert_eq!(code, 1);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn segmask_paints_palette_colors() {
    let tmp = tempfile::tempdir().unwrap();
    let png = tmp.path().join("street_mask.png");
    assert_eq!(
        run(&["segmask", "--coco", &path_str(&fixture("coco_instances.json")), "--image", "street.png", "-o", &path_str(&png)]),
        0
    );
    let painted = decode_image(&std::fs::read(&png).unwrap()).unwrap();
    let decoded = SegmentationMask::from_painted(&painted, Palette::voc()).unwrap();

    let ds = CocoDataset::from_json(&std::fs::read(fixture("coco_instances.json")).unwrap()).unwrap();
    let index = ds.index().unwrap();
    let expected = SegmentationMask::from_annotations(&index[&2], 40, 30, Palette::voc()).unwrap();
    assert_eq!(decoded.class_ids(), expected.class_ids());
    assert!(decoded.class_ids().contains(&18) && decoded.class_ids().contains(&1));

    let voc = Palette::voc();
    for y in 0..30 {
        for x in 0..40 {
            let rgb = voc.color(expected.class_at(x, y)).unwrap();
            for (c, &v) in rgb.iter().enumerate() {
                assert_eq!((painted.get(x, y, c) * 255.0).round() as u8, v);
            }
        }
    }
    assert_eq!(run(&["segmask", "--coco", &path_str(&fixture("coco_instances.json")), "--image-id", "42", "-o", &path_str(&png)]), 1);
}

#[test]
fn reconstruct_writes_trace_and_sample() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["reconstruct", "--class", "7", "-o", &path_str(tmp.path())]), 1);
    assert!(!tmp.path().join("reconstruction.csv").exists());

    assert_eq!(run(&["reconstruct", "--class", "0", "-o", &path_str(tmp.path())]), 0);
    let mut reader = csv::Reader::from_path(tmp.path().join("reconstruction.csv")).unwrap();
    let rows: Vec<(f64, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect();
    let (first, last) = (rows.first().unwrap(), rows.last().unwrap());
    assert!(last.0 < first.0, "loss should trend down: {first:?} -> {last:?}");
    assert!(last.1 >= 0.9);
    let sample = decode_image(&std::fs::read(tmp.path().join("sample.png")).unwrap()).unwrap();
    assert_eq!((sample.width(), sample.height(), sample.channels()), (16, 16, 3));
}
