//! Detector-dump ingestion and efficacy metrics: box counts, new and
//! disappearing labels, and COCO-style AP/AR.

mod ap;
mod detections;
mod diff;

pub use ap::{
    comparison_table, compute_ap, compute_map, iou, iou_thresholds, ApSummary, CategoryMetrics,
    EvalReport, GroundTruth, GroundTruthBox, MAX_DETECTIONS, MEDIUM_AREA, RECALL_POINTS,
    SMALL_AREA,
};
pub use detections::{parse_detections, BBox, Detection, DetectionSet};
pub use diff::{count_bboxes, diff_labels, DiffReport, ImageDiff, DEFAULT_SCORE_THRESHOLD};
