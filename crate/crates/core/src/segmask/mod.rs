//! COCO annotation ingestion, polygon rasterization, painted masks and target localization.

pub mod coco;
mod mask;
mod raster;

pub use coco::{parse_coco_annotations, AnnotationIndex, CocoDataset, ObjectAnnotation};
pub use mask::{
    locate_by_color, locate_instances, locate_target, paint_mask, Palette, RegionBox,
    RegionSummary, Rgb, SegmentationMask, TargetRegion,
};
pub use raster::{polygon_from_flat, rasterize_polygon, PixelMask};
