//! COCO-style box AP/AR: greedy max-IoU matching per image and category,
//! 101-point interpolated precision, at most 100 detections per image and
//! category. Crowd ground truth never counts as a miss, and detections matched
//! to it are neither true nor false positives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalharness::{BBox, Detection, DetectionSet};
use crate::segmask::coco::Segmentation;
use crate::segmask::CocoDataset;

pub const MAX_DETECTIONS: usize = 100;
pub const RECALL_POINTS: usize = 101;
pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const MEDIUM_AREA: f64 = 96.0 * 96.0;

/// `0.50, 0.55, …, 0.95`.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    /// Segmentation area when known.
    pub area: Option<f64>,
    pub crowd: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub images: BTreeSet<u64>,
    /// Declared categories, including those without instances.
    pub categories: BTreeSet<u64>,
    pub boxes: Vec<GroundTruthBox>,
}

fn polygon_extent(seg: &Segmentation) -> Option<BBox> {
    let Segmentation::Polygons(polys) = seg else {
        return None;
    };
    let pts = polys.iter().flat_map(|p| p.chunks_exact(2));
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    (x1 > x0 && y1 > y0).then_some([x0, y0, x1 - x0, y1 - y0])
}

impl GroundTruth {
    /// Boxes come from `bbox`, falling back to the polygon extent.
    pub fn from_coco(ds: &CocoDataset) -> Result<Self> {
        let images: BTreeSet<u64> = ds.images.iter().map(|i| i.id).collect();
        let mut bad = Vec::new();
        let mut boxes = Vec::with_capacity(ds.annotations.len());
        for (i, a) in ds.annotations.iter().enumerate() {
            let bbox = a.bbox.or_else(|| a.segmentation.as_ref().and_then(polygon_extent));
            match bbox {
                Some(bbox) if images.contains(&a.image_id) && bbox[2] > 0.0 && bbox[3] > 0.0 => {
                    boxes.push(GroundTruthBox {
                        image_id: a.image_id,
                        category_id: a.category_id,
                        bbox,
                        area: a.area,
                        crowd: a.iscrowd != 0,
                    })
                }
                _ => bad.push(i),
            }
        }
        if !bad.is_empty() {
            return Err(Error::Validation {
                message: format!(
                    "{} annotation(s) with an unknown image or no usable box; first is record {}",
                    bad.len(),
                    bad[0]
                ),
                records: bad,
            });
        }
        Ok(Self {
            images,
            categories: ds.categories.iter().map(|c| c.id).collect(),
            boxes,
        })
    }

    fn has_areas(&self) -> bool {
        self.boxes.iter().all(|b| b.crowd || b.area.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AreaRange(f64, f64);

const ALL_AREAS: AreaRange = AreaRange(0.0, f64::INFINITY);

impl AreaRange {
    fn contains(&self, a: f64) -> bool {
        a >= self.0 && a < self.1
    }
}

/// Outcome of one category at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
struct CategoryEval {
    ap: f64,
    recall: f64,
}

struct Grouped<'a> {
    gt: BTreeMap<(u64, u64), Vec<&'a GroundTruthBox>>,
    dets: BTreeMap<(u64, u64), Vec<&'a Detection>>,
}

fn group<'a>(dets: &'a DetectionSet, gt: &'a GroundTruth) -> Grouped<'a> {
    let mut g: BTreeMap<(u64, u64), Vec<&GroundTruthBox>> = BTreeMap::new();
    for b in &gt.boxes {
        g.entry((b.category_id, b.image_id)).or_default().push(b);
    }
    let mut d: BTreeMap<(u64, u64), Vec<&Detection>> = BTreeMap::new();
    for det in dets.detections().iter().filter(|d| gt.images.contains(&d.image_id)) {
        d.entry((det.category_id, det.image_id)).or_default().push(det);
    }
    for v in d.values_mut() {
        // Stable: equal scores keep input order.
        v.sort_by(|a, b| b.score.total_cmp(&a.score));
        v.truncate(MAX_DETECTIONS);
    }
    Grouped { gt: g, dets: d }
}

/// Counts non-ignored ground truth of `category` in `range`.
fn positives(grouped: &Grouped, category: u64, range: AreaRange) -> usize {
    grouped
        .gt
        .range((category, 0)..=(category, u64::MAX))
        .flat_map(|(_, v)| v.iter())
        .filter(|b| !b.crowd && range.contains(b.area.unwrap_or(b.bbox[2] * b.bbox[3])))
        .count()
}

fn evaluate_category(grouped: &Grouped, category: u64, threshold: f64, range: AreaRange) -> Option<CategoryEval> {
    let npos = positives(grouped, category, range);
    if npos == 0 {
        return None;
    }
    let span = (category, 0)..=(category, u64::MAX);
    let keys: BTreeSet<u64> = grouped
        .gt
        .range(span.clone())
        .map(|(k, _)| k.1)
        .chain(grouped.dets.range(span).map(|(k, _)| k.1))
        .collect();

    // (score, is_tp) for every non-ignored detection, images in id order.
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for image in keys {
        let empty = Vec::new();
        let gts = grouped.gt.get(&(category, image)).unwrap_or(&empty);
        let dets = grouped.dets.get(&(category, image)).map(Vec::as_slice).unwrap_or(&[]);
        let ignored = |b: &GroundTruthBox| b.crowd || !range.contains(b.area.unwrap_or(b.bbox[2] * b.bbox[3]));
        // Non-ignored ground truth first so matching prefers it.
        let mut order: Vec<usize> = (0..gts.len()).collect();
        order.sort_by_key(|&g| ignored(gts[g]));
        let mut matched = vec![false; gts.len()];
        for d in dets {
            let mut best: Option<usize> = None;
            let mut best_iou = threshold;
            for &g in &order {
                if matched[g] && !gts[g].crowd {
                    continue;
                }
                if let Some(b) = best {
                    if !ignored(gts[b]) && ignored(gts[g]) {
                        break;
                    }
                }
                let v = iou(&d.bbox, &gts[g].bbox);
                if v < best_iou {
                    continue;
                }
                best_iou = v;
                best = Some(g);
            }
            match best {
                Some(g) => {
                    matched[g] = true;
                    if !ignored(gts[g]) {
                        scored.push((d.score, true));
                    }
                }
                None => {
                    if range.contains(d.bbox[2] * d.bbox[3]) {
                        scored.push((d.score, false));
                    }
                }
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(scored.len());
    let mut precision = Vec::with_capacity(scored.len());
    for &(_, hit) in &scored {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / npos as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        precision[i - 1] = precision[i - 1].max(precision[i]);
    }
    let ap = (0..RECALL_POINTS)
        .map(|k| {
            let r = k as f64 / (RECALL_POINTS - 1) as f64;
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum::<f64>()
        / RECALL_POINTS as f64;
    Some(CategoryEval {
        ap,
        recall: recall.last().copied().unwrap_or(0.0),
    })
}

/// Categories with at least one non-crowd ground-truth box.
fn evaluated_categories(gt: &GroundTruth) -> BTreeSet<u64> {
    gt.boxes.iter().filter(|b| !b.crowd).map(|b| b.category_id).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSummary {
    pub iou_threshold: f64,
    /// Mean over evaluated categories, 0 when there are none.
    pub ap: f64,
    pub per_category: BTreeMap<u64, f64>,
    /// Categories seen in detections or declared, but without ground truth.
    pub skipped: Vec<u64>,
}

fn skipped_categories(dets: &DetectionSet, gt: &GroundTruth, evaluated: &BTreeSet<u64>) -> Vec<u64> {
    let seen: BTreeSet<u64> = dets
        .detections()
        .iter()
        .map(|d| d.category_id)
        .chain(gt.categories.iter().copied())
        .chain(gt.boxes.iter().map(|b| b.category_id))
        .collect();
    seen.difference(evaluated).copied().collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn compute_ap(dets: &DetectionSet, gt: &GroundTruth, iou_threshold: f64) -> Result<ApSummary> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::domain(format!("IoU threshold {iou_threshold} outside [0, 1]")));
    }
    let grouped = group(dets, gt);
    let cats = evaluated_categories(gt);
    let per_category: BTreeMap<u64, f64> = cats
        .iter()
        .filter_map(|&c| evaluate_category(&grouped, c, iou_threshold, ALL_AREAS).map(|e| (c, e.ap)))
        .collect();
    Ok(ApSummary {
        iou_threshold,
        ap: mean(per_category.values().copied()),
        skipped: skipped_categories(dets, gt, &cats),
        per_category,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category_id: u64,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_small: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_medium: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_large: Option<f64>,
    pub per_category: Vec<CategoryMetrics>,
    pub skipped_categories: Vec<u64>,
    /// Detection image ids absent from the ground truth; excluded from metrics.
    pub orphan_images: Vec<u64>,
    pub warnings: Vec<String>,
}

/// Mean AP over IoU thresholds for one area range; `None` without ground truth in range.
fn range_map(grouped: &Grouped, cats: &BTreeSet<u64>, range: AreaRange) -> Option<f64> {
    let evals: Vec<f64> = iou_thresholds()
        .par_iter()
        .map(|&t| {
            let aps: Vec<f64> = cats
                .iter()
                .filter_map(|&c| evaluate_category(grouped, c, t, range).map(|e| e.ap))
                .collect();
            (!aps.is_empty()).then(|| mean(aps.into_iter()))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Option<Vec<_>>>()?;
    Some(mean(evals.into_iter()))
}

pub fn compute_map(dets: &DetectionSet, gt: &GroundTruth) -> Result<EvalReport> {
    let mut warnings = Vec::new();
    let det_images: BTreeSet<u64> = dets.image_ids().collect();
    let orphan_images: Vec<u64> = det_images.difference(&gt.images).copied().collect();
    if !orphan_images.is_empty() {
        warnings.push(format!(
            "{} detection image id(s) have no ground truth and were excluded: {:?}",
            orphan_images.len(),
            orphan_images
        ));
    }
    let grouped = group(dets, gt);
    let cats = evaluated_categories(gt);
    let skipped = skipped_categories(dets, gt, &cats);
    if !skipped.is_empty() {
        warnings.push(format!("categories without ground truth were skipped: {skipped:?}"));
    }

    let thresholds = iou_thresholds();
    // table[t][c]
    let table: Vec<Vec<CategoryEval>> = thresholds
        .par_iter()
        .map(|&t| {
            cats.iter()
                .map(|&c| evaluate_category(&grouped, c, t, ALL_AREAS).expect("category has ground truth"))
                .collect()
        })
        .collect();
    let per_category: Vec<CategoryMetrics> = cats
        .iter()
        .enumerate()
        .map(|(ci, &category_id)| CategoryMetrics {
            category_id,
            ap: mean(table.iter().map(|row| row[ci].ap)),
            ap50: table[0][ci].ap,
            ap75: table[5][ci].ap,
            ar: mean(table.iter().map(|row| row[ci].recall)),
        })
        .collect();

    let (ap_small, ap_medium, ap_large) = if gt.has_areas() {
        let bins = [
            AreaRange(0.0, SMALL_AREA),
            AreaRange(SMALL_AREA, MEDIUM_AREA),
            AreaRange(MEDIUM_AREA, f64::INFINITY),
        ]
        .map(|r| range_map(&grouped, &cats, r));
        for (name, v) in ["small", "medium", "large"].iter().zip(&bins) {
            if v.is_none() && !cats.is_empty() {
                warnings.push(format!("no ground truth in the {name} area range; AP_{name} omitted"));
            }
        }
        (bins[0], bins[1], bins[2])
    } else {
        warnings.push("ground-truth areas unavailable; size-binned AP omitted".into());
        (None, None, None)
    };

    Ok(EvalReport {
        map: mean(per_category.iter().map(|c| c.ap)),
        ap50: mean(per_category.iter().map(|c| c.ap50)),
        ap75: mean(per_category.iter().map(|c| c.ap75)),
        ar: mean(per_category.iter().map(|c| c.ar)),
        ap_small,
        ap_medium,
        ap_large,
        per_category,
        skipped_categories: skipped,
        orphan_images,
        warnings,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let rows = [
            ("mAP@[.50:.95]", Some(self.map)),
            ("AP50", Some(self.ap50)),
            ("AP75", Some(self.ap75)),
            ("AP small", self.ap_small),
            ("AP medium", self.ap_medium),
            ("AP large", self.ap_large),
            ("AR@100", Some(self.ar)),
        ];
        let mut out = String::new();
        for (name, v) in rows {
            let _ = writeln!(out, "{name:<16} {:>8}", fmt(v));
        }
        out
    }
}

/// Side-by-side metrics of the origin and adversarial dumps.
pub fn comparison_table(origin: &EvalReport, adv: &EvalReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let rows = [
        ("mAP@[.50:.95]", Some(origin.map), Some(adv.map)),
        ("AP50", Some(origin.ap50), Some(adv.ap50)),
        ("AP75", Some(origin.ap75), Some(adv.ap75)),
        ("AP small", origin.ap_small, adv.ap_small),
        ("AP medium", origin.ap_medium, adv.ap_medium),
        ("AP large", origin.ap_large, adv.ap_large),
        ("AR@100", Some(origin.ar), Some(adv.ar)),
    ];
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>12} {:>12}", "", "origin", "adversarial");
    for (name, o, a) in rows {
        let _ = writeln!(out, "{name:<16} {:>12} {:>12}", fmt(o), fmt(a));
    }
    out
}
