use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{output_stem, AnnotationSource, AttackConfig, ValidatedAttack};
use super::{sha256_hex, CliError, StageError};
use crate::error::{Error, Result};
use crate::imagecore::io::{decode_image, encode_png, write_atomic};
use crate::imagecore::{resize_bilinear, ImageBuffer};
use crate::inversion::{reconstruct, ReconstructionState, ToyClassifier, ToyTrainConfig, TrainReport};
use crate::perturb::{
    compose_adversarial, extract_perturbation, perturbation_report, PerturbationReport, StripeMask,
};
use crate::replace::{apply_replacement, plan_replacement};
use crate::segmask::{locate_target, AnnotationIndex, CocoDataset, Palette, RegionSummary, SegmentationMask};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const PLAN_FILE: &str = "replacement_plan.json";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.csv";
pub const PERTURBATION_FILE: &str = "perturbation.json";
pub const ADV_FILE: &str = "adv.png";
pub const FAILURE_FILE: &str = "failure.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRecord {
    pub train: ToyTrainConfig,
    pub report: TrainReport,
    pub weights_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub class: usize,
    pub iterations: usize,
    pub final_prob: Option<f64>,
    pub reached_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ImageStatus {
    Ok {
        region: RegionSummary,
        replaced_pixels: usize,
        replacement_ratio: f64,
        perturbation_l2: f64,
        report: PerturbationReport,
    },
    Failed {
        error: StageError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub input: String,
    pub input_sha256: String,
    pub output_dir: String,
    #[serde(flatten)]
    pub status: ImageStatus,
    /// File name to SHA-256 of every artifact written for this image.
    pub outputs: BTreeMap<String, String>,
}

/// Everything needed to reproduce the run; contains no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config: AttackConfig,
    pub classifier: ClassifierRecord,
    pub reconstruction: ReconstructionRecord,
    pub images: Vec<ImageRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

struct Input {
    path: PathBuf,
    bytes_sha256: String,
    image: ImageBuffer,
    mask: MaskSource,
}

enum MaskSource {
    /// COCO id of the matched image.
    Coco(u64),
    Painted(PathBuf, ImageBuffer),
}

struct Shared<'a> {
    v: &'a ValidatedAttack,
    index: Option<AnnotationIndex>,
    sample: &'a ImageBuffer,
    recon_csv: &'a [u8],
}

fn load_error(err: Error, path: &Path) -> CliError {
    CliError::stage("load", err, Some(path))
}

fn read(path: &Path) -> std::result::Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| load_error(Error::io(path, e), path))
}

/// Reads and decodes every input before anything is written.
fn load_inputs(v: &ValidatedAttack) -> std::result::Result<(Vec<Input>, Option<AnnotationIndex>), CliError> {
    let mut coco: Option<(CocoDataset, AnnotationIndex, PathBuf)> = None;
    if let AnnotationSource::Coco(path) = &v.annotations {
        let bytes = read(path)?;
        let ds = CocoDataset::from_json(&bytes).map_err(|e| load_error(e, path))?;
        let index = ds.index().map_err(|e| load_error(e, path))?;
        coco = Some((ds, index, path.clone()));
    }
    let mut inputs = Vec::with_capacity(v.config.inputs.len());
    for (k, path) in v.config.inputs.iter().enumerate() {
        let bytes = read(path)?;
        let image = decode_image(&bytes).map_err(|e| load_error(e, path))?;
        if image.channels() != 1 && image.channels() != 3 {
            return Err(load_error(
                Error::domain(format!("{} channels; expected gray or RGB", image.channels())),
                path,
            ));
        }
        let mask = match (&v.annotations, &coco) {
            (AnnotationSource::Coco(_), Some((ds, _, ann_path))) => {
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let entry = ds.image_by_file_name(&name).ok_or_else(|| {
                    load_error(Error::domain(format!("no image named {name:?} in the annotations")), ann_path)
                })?;
                if (entry.width as usize, entry.height as usize) != (image.width(), image.height()) {
                    return Err(load_error(
                        Error::domain(format!(
                            "annotations give {}x{} but the file is {}x{}",
                            entry.width,
                            entry.height,
                            image.width(),
                            image.height()
                        )),
                        path,
                    ));
                }
                MaskSource::Coco(entry.id)
            }
            (AnnotationSource::Masks(masks), _) => {
                let mpath = &masks[k];
                let m = decode_image(&read(mpath)?).map_err(|e| load_error(e, mpath))?;
                if (m.width(), m.height()) != (image.width(), image.height()) {
                    return Err(load_error(Error::domain("mask and image differ in size"), mpath));
                }
                MaskSource::Painted(mpath.clone(), m)
            }
            _ => unreachable!("COCO source is loaded above"),
        };
        inputs.push(Input {
            path: path.clone(),
            bytes_sha256: sha256_hex(&bytes),
            image,
            mask,
        });
    }
    Ok((inputs, coco.map(|(_, index, _)| index)))
}

/// Resizes the classifier-sized sample to the image and matches its channel count.
fn fit_sample(sample: &ImageBuffer, like: &ImageBuffer) -> Result<ImageBuffer> {
    let resized = resize_bilinear(sample, like.width(), like.height())?;
    if resized.channels() == like.channels() {
        return Ok(resized);
    }
    let c = resized.channels() as f64;
    ImageBuffer::from_fn(like.width(), like.height(), 1, |x, y, _| {
        (0..resized.channels()).map(|ch| resized.get(x, y, ch)).sum::<f64>() / c
    })
}

struct Writer {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl Writer {
    fn write(&mut self, name: &str, bytes: &[u8]) -> std::result::Result<(), StageError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes).map_err(|e| StageError::new("write", &e, Some(&path)))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

fn at<'a>(stage: &'a str, file: &'a Path) -> impl Fn(Error) -> StageError + 'a {
    move |e| StageError::new(stage, &e, Some(file))
}

fn process(input: &Input, shared: &Shared, w: &mut Writer) -> std::result::Result<ImageStatus, StageError> {
    let v = shared.v;
    let (img_w, img_h) = (input.image.width(), input.image.height());

    let mask = match &input.mask {
        MaskSource::Coco(id) => {
            let anns = shared
                .index
                .as_ref()
                .and_then(|i| i.get(id))
                .map(|a| a.as_slice())
                .unwrap_or(&[]);
            SegmentationMask::from_annotations(anns, img_w, img_h, Palette::voc())
        }
        MaskSource::Painted(_, m) => SegmentationMask::from_painted(m, Palette::voc()),
    };
    let mask_file = match &input.mask {
        MaskSource::Painted(p, _) => p.as_path(),
        MaskSource::Coco(_) => input.path.as_path(),
    };
    let mask = mask.map_err(at("locate", mask_file))?;
    let region = locate_target(&mask, v.target_label).map_err(at("locate", &input.path))?;

    let plan = plan_replacement(&input.image, &region, v.config.step, v.config.epsilon)
        .map_err(at("replace", &input.path))?;
    let replaced = apply_replacement(&input.image, &plan).map_err(at("replace", &input.path))?;
    w.write(PLAN_FILE, &plan.to_json().map_err(at("replace", &input.path))?)?;

    let s_star = fit_sample(shared.sample, &input.image).map_err(at("reconstruct", &input.path))?;
    w.write(RECONSTRUCTION_FILE, shared.recon_csv)?;

    let dims = input.image.dims();
    let (vm, hm): (StripeMask, StripeMask) = v.stripes.build(dims).map_err(at("perturb", &input.path))?;
    let mut r = extract_perturbation(&s_star, &replaced, (&vm, &hm), v.config.eta, v.config.extract_mode)
        .map_err(at("perturb", &input.path))?;
    r.anchor = Some(region.summary());
    let offset = (v.config.offset_i, v.config.offset_j);
    let adv = compose_adversarial(&replaced, &r, &region, offset).map_err(at("perturb", &input.path))?;
    let report = perturbation_report(&input.image, &adv).map_err(at("perturb", &input.path))?;
    w.write(PERTURBATION_FILE, &r.to_json(Some(offset)).map_err(at("perturb", &input.path))?)?;
    w.write(ADV_FILE, &encode_png(&adv).map_err(at("perturb", &input.path))?)?;

    Ok(ImageStatus::Ok {
        region: region.summary(),
        replaced_pixels: plan.pairs.len(),
        replacement_ratio: plan.ratio(),
        perturbation_l2: r.l2(),
        report,
    })
}

/// Runs the full pipeline. Inputs are all loaded before the first write; a
/// failing image keeps the artifacts of its completed stages plus a failure record.
pub fn run_attack(v: &ValidatedAttack) -> std::result::Result<AttackOutcome, CliError> {
    let (inputs, index) = load_inputs(v)?;

    let train = ToyTrainConfig {
        seed: v.config.seed,
        ..ToyTrainConfig::default()
    };
    let recon_err = |e: Error| CliError::stage("reconstruct", e, None);
    let (cls, train_report) = ToyClassifier::train(&train).map_err(recon_err)?;
    let (weights_manifest, weights) = cls.to_weight_files().map_err(recon_err)?;
    let mut weights_blob = weights_manifest;
    weights_blob.extend_from_slice(&weights);
    let (sample, state): (ImageBuffer, ReconstructionState) =
        reconstruct(&cls, v.config.reconstruction_class, &v.inversion).map_err(recon_err)?;
    let recon_csv = state.to_csv().map_err(recon_err)?;
    let final_prob = state.final_prob();

    let out = &v.output_dir;
    std::fs::create_dir_all(out).map_err(|e| CliError::stage("write", Error::io(out, e), Some(out)))?;

    let shared = Shared {
        v,
        index,
        sample: &sample,
        recon_csv: &recon_csv,
    };
    let records: Vec<ImageRecord> = inputs
        .par_iter()
        .map(|input| {
            let stem = output_stem(&input.path);
            let dir = out.join(&stem);
            let mut w = Writer {
                dir: dir.clone(),
                outputs: BTreeMap::new(),
            };
            let status = match std::fs::create_dir_all(&dir) {
                Err(e) => Err(StageError::new("write", &Error::io(&dir, e), Some(&dir))),
                Ok(()) => process(input, &shared, &mut w),
            };
            let status = match status {
                Ok(s) => {
                    println!("{}: ok", input.path.display());
                    s
                }
                Err(error) => {
                    println!("{}: failed at {}", input.path.display(), error.stage);
                    let _ = w.write(FAILURE_FILE, error.to_json().as_bytes());
                    ImageStatus::Failed { error }
                }
            };
            ImageRecord {
                input: input.path.display().to_string(),
                input_sha256: input.bytes_sha256.clone(),
                output_dir: stem,
                status,
                outputs: w.outputs,
            }
        })
        .collect();

    let manifest = RunManifest {
        schema_version: super::config::SCHEMA_VERSION,
        config: v.config.clone(),
        classifier: ClassifierRecord {
            train,
            report: train_report,
            weights_sha256: sha256_hex(&weights_blob),
        },
        reconstruction: ReconstructionRecord {
            class: v.config.reconstruction_class,
            iterations: state.iter,
            final_prob,
            reached_target: final_prob.is_some_and(|p| p >= v.inversion.target_prob),
        },
        images: records,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    let bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| CliError::stage("write", e.into(), Some(&manifest_path)))?;
    write_atomic(&manifest_path, &bytes).map_err(|e| CliError::stage("write", e, Some(&manifest_path)))?;

    if let Some(err) = manifest.images.iter().find_map(|r| match &r.status {
        ImageStatus::Failed { error } => Some(error.clone()),
        ImageStatus::Ok { .. } => None,
    }) {
        return Err(CliError::Stage(err));
    }
    Ok(AttackOutcome {
        manifest,
        manifest_path,
    })
}
