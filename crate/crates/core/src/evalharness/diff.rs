use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evalharness::DetectionSet;

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.3;

/// Detections with `score ≥ threshold`.
pub fn count_bboxes(set: &DetectionSet, threshold: f64) -> usize {
    set.above(threshold).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDiff {
    pub image_id: u64,
    pub bbox_count_origin: usize,
    pub bbox_count_adv: usize,
    pub new_labels: usize,
    pub disappeared_labels: usize,
}

/// Totals are sums of `per_image`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub threshold: f64,
    pub bbox_count_origin: usize,
    pub bbox_count_adv: usize,
    pub new_labels: usize,
    pub disappeared_labels: usize,
    pub per_image: Vec<ImageDiff>,
}

fn category_counts(set: &DetectionSet, image_id: u64, threshold: f64) -> BTreeMap<u64, usize> {
    let mut counts = BTreeMap::new();
    for d in set.for_image(image_id).filter(|d| d.score >= threshold) {
        *counts.entry(d.category_id).or_insert(0) += 1;
    }
    counts
}

/// Per-image multiset difference of category ids above `threshold`.
pub fn diff_labels(origin: &DetectionSet, adv: &DetectionSet, threshold: f64) -> DiffReport {
    let images: BTreeSet<u64> = origin.image_ids().chain(adv.image_ids()).collect();
    let per_image: Vec<ImageDiff> = images
        .into_iter()
        .map(|image_id| {
            let o = category_counts(origin, image_id, threshold);
            let a = category_counts(adv, image_id, threshold);
            let cats: BTreeSet<u64> = o.keys().chain(a.keys()).copied().collect();
            let (mut new, mut gone) = (0, 0);
            for c in cats {
                let (co, ca) = (o.get(&c).copied().unwrap_or(0), a.get(&c).copied().unwrap_or(0));
                new += ca.saturating_sub(co);
                gone += co.saturating_sub(ca);
            }
            ImageDiff {
                image_id,
                bbox_count_origin: o.values().sum(),
                bbox_count_adv: a.values().sum(),
                new_labels: new,
                disappeared_labels: gone,
            }
        })
        .collect();
    DiffReport {
        threshold,
        bbox_count_origin: per_image.iter().map(|d| d.bbox_count_origin).sum(),
        bbox_count_adv: per_image.iter().map(|d| d.bbox_count_adv).sum(),
        new_labels: per_image.iter().map(|d| d.new_labels).sum(),
        disappeared_labels: per_image.iter().map(|d| d.disappeared_labels).sum(),
        per_image,
    }
}

impl DiffReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    /// Two-column table: origin and adversarial counts.
    pub fn table(&self) -> String {
        let rows = [
            (
                "Number of bounding boxes",
                self.bbox_count_origin.to_string(),
                self.bbox_count_adv.to_string(),
            ),
            ("Number of new labels", "-".into(), self.new_labels.to_string()),
            (
                "Number of disappearing labels",
                "-".into(),
                self.disappeared_labels.to_string(),
            ),
        ];
        let mut out = String::new();
        let _ = writeln!(out, "score threshold {}", self.threshold);
        let _ = writeln!(out, "{:<30} {:>12} {:>12}", "", "origin", "adversarial");
        for (name, o, a) in rows {
            let _ = writeln!(out, "{name:<30} {o:>12} {a:>12}");
        }
        out
    }
}
