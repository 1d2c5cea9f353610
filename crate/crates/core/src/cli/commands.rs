use std::path::Path;

use super::{sha256_hex, CliError, EvalArgs, GradcheckArgs, ReconstructArgs, SegmaskArgs};
use crate::error::Error;
use crate::evalharness::{compute_map, comparison_table, diff_labels, parse_detections, DetectionSet, GroundTruth};
use crate::imagecore::io::{encode_png, write_atomic};
use crate::inversion::{gradient_check, reconstruct, InversionConfig, ToyClassifier, ToyTrainConfig, SHAPE_CLASSES};
use crate::segmask::{locate_target, paint_mask, CocoDataset, Palette, SegmentationMask};

fn read(stage: &str, path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::stage(stage, Error::io(path, e), Some(path)))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::stage("write", e, Some(path)))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::stage("write", Error::io(dir, e), Some(dir)))
}

fn to_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<Vec<u8>, CliError> {
    serde_json::to_vec_pretty(value).map_err(|e| CliError::stage("write", e.into(), Some(path)))
}

fn load_detections(path: &Path) -> Result<DetectionSet, CliError> {
    let bytes = read("load", path)?;
    parse_detections(&bytes).map_err(|e| CliError::stage("load", e, Some(path)))
}

fn train_toy(seed: u64) -> Result<ToyClassifier, CliError> {
    let cfg = ToyTrainConfig {
        seed,
        ..ToyTrainConfig::default()
    };
    ToyClassifier::train(&cfg)
        .map(|(cls, _)| cls)
        .map_err(|e| CliError::stage("reconstruct", e, None))
}

/// Writes `diff_report.json`, `eval_origin.json`, `eval_adv.json` and `report.txt`.
/// Detections on images absent from the ground truth are dropped with a warning.
pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::Config(format!("threshold must lie in [0, 1], got {}", args.threshold)));
    }
    let gt_bytes = read("load", &args.gt)?;
    let ds = CocoDataset::from_json(&gt_bytes).map_err(|e| CliError::stage("load", e, Some(&args.gt)))?;
    let gt = GroundTruth::from_coco(&ds).map_err(|e| CliError::stage("load", e, Some(&args.gt)))?;
    let origin = load_detections(&args.origin)?;
    let adv = load_detections(&args.adv)?;

    let eval_err = |e: Error| CliError::stage("eval", e, None);
    let eval_origin = compute_map(&origin, &gt).map_err(eval_err)?;
    let eval_adv = compute_map(&adv, &gt).map_err(eval_err)?;
    let mut warnings: Vec<String> = Vec::new();
    for (name, report) in [("origin", &eval_origin), ("adv", &eval_adv)] {
        warnings.extend(report.warnings.iter().map(|w| format!("{name}: {w}")));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let known = |id: u64| gt.images.contains(&id);
    let diff = diff_labels(&origin.retain_images(known), &adv.retain_images(known), args.threshold);

    let mut text = diff.table();
    text.push('\n');
    text.push_str(&comparison_table(&eval_origin, &eval_adv));
    for w in &warnings {
        text.push_str(&format!("warning: {w}\n"));
    }

    create_dir(&args.output_dir)?;
    let out = &args.output_dir;
    for (name, bytes) in [
        ("diff_report.json", to_json(&diff, out)?),
        ("eval_origin.json", to_json(&eval_origin, out)?),
        ("eval_adv.json", to_json(&eval_adv, out)?),
        ("report.txt", text.clone().into_bytes()),
    ] {
        write(&out.join(name), &bytes)?;
    }
    print!("{text}");
    Ok(())
}

/// Writes `reconstruction.csv` and `sample.png` and prints the final probability.
pub fn reconstruct_cmd(args: &ReconstructArgs) -> Result<(), CliError> {
    let mut cfg = InversionConfig::default();
    if let Some(n) = args.max_iters {
        cfg.max_iters = n;
    }
    if let Some(r) = args.update_rule {
        cfg.update_rule = r;
    }
    let err = |e: Error| CliError::stage("reconstruct", e, None);
    if args.class >= SHAPE_CLASSES.len() {
        return Err(err(Error::domain(format!(
            "class index {} out of range for {} classes",
            args.class,
            SHAPE_CLASSES.len()
        ))));
    }
    let cls = train_toy(args.seed)?;
    let (sample, state) = reconstruct(&cls, args.class, &cfg).map_err(err)?;
    create_dir(&args.output_dir)?;
    write(&args.output_dir.join("reconstruction.csv"), &state.to_csv().map_err(err)?)?;
    let png = encode_png(&sample).map_err(err)?;
    write(&args.output_dir.join("sample.png"), &png)?;
    println!(
        "class {} after {} iterations: p = {:.4}, sample sha256 {}",
        args.class,
        state.iter,
        state.final_prob().unwrap_or(f64::NAN),
        sha256_hex(&png)
    );
    Ok(())
}

/// Paints one image's annotations with the VOC palette.
pub fn segmask(args: &SegmaskArgs) -> Result<(), CliError> {
    let bytes = read("load", &args.coco)?;
    let at = |stage: &'static str| {
        let file = args.coco.clone();
        move |e: Error| CliError::stage(stage, e, Some(&file))
    };
    let ds = CocoDataset::from_json(&bytes).map_err(at("load"))?;
    let entry = match (&args.image, args.image_id) {
        (Some(name), _) => ds.image_by_file_name(name),
        (None, Some(id)) => ds.image(id),
        (None, None) => None,
    }
    .ok_or_else(|| at("locate")(Error::domain("image not listed in the annotations")))?;
    let index = ds.index().map_err(at("load"))?;
    let anns = index.get(&entry.id).map(|a| a.as_slice()).unwrap_or(&[]);
    let mask = SegmentationMask::from_annotations(anns, entry.width as usize, entry.height as usize, Palette::voc())
        .map_err(at("locate"))?;
    if let Some(label) = args.target_label {
        let region = locate_target(&mask, label).map_err(at("locate"))?;
        println!("{}", serde_json::to_string(&region.summary()).unwrap_or_default());
    }
    let png = encode_png(&paint_mask(&mask)).map_err(at("write"))?;
    write(&args.output, &png)
}

/// Prints the report as JSON; fails when the worst probe exceeds the tolerance.
pub fn gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    if args.probes == 0 {
        return Err(CliError::Config("--probes must be at least 1".into()));
    }
    let cls = train_toy(args.seed)?;
    let report = gradient_check(&cls, args.probes, args.seed).map_err(|e| CliError::stage("gradcheck", e, None))?;
    println!(
        "{}",
        serde_json::json!({
            "probes": report.probes.len(),
            "resampled": report.resampled,
            "max_rel_error": report.max_rel_error,
            "tolerance": args.tolerance,
        })
    );
    if report.passes(args.tolerance) {
        Ok(())
    } else {
        Err(CliError::stage(
            "gradcheck",
            Error::domain(format!(
                "max relative error {:e} exceeds {:e}",
                report.max_rel_error, args.tolerance
            )),
            None,
        ))
    }
}
