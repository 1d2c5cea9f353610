//! COCO 2017 annotation subset: images, polygon annotations, categories.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmask::raster::polygon_from_flat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    #[serde(default)]
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    #[serde(default)]
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Segmentation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    /// `[x, y, width, height]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    /// Run-length encoded crowd mask; kept opaque.
    Rle(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

/// One polygon-segmented object joined to its image.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnnotation {
    pub annotation_id: u64,
    pub category_id: u64,
    pub polygons: Vec<Vec<(f64, f64)>>,
    pub bbox: Option<[f64; 4]>,
    pub area: Option<f64>,
}

pub type AnnotationIndex = BTreeMap<u64, Vec<ObjectAnnotation>>;

impl CocoDataset {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn image(&self, id: u64) -> Option<&CocoImage> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn image_by_file_name(&self, name: &str) -> Option<&CocoImage> {
        self.images.iter().find(|i| i.file_name == name)
    }

    /// Joins polygon annotations to their images.
    ///
    /// Annotations without a segmentation are skipped; RLE segmentation is rejected.
    pub fn index(&self) -> Result<AnnotationIndex> {
        let known: BTreeSet<u64> = self.images.iter().map(|i| i.id).collect();
        let missing: Vec<usize> = self
            .annotations
            .iter()
            .enumerate()
            .filter(|(_, a)| !known.contains(&a.image_id))
            .map(|(i, _)| i)
            .collect();
        if !missing.is_empty() {
            let ids: BTreeSet<u64> = missing.iter().map(|&i| self.annotations[i].image_id).collect();
            return Err(Error::Validation {
                message: format!("annotations reference unknown image ids {ids:?}"),
                records: missing,
            });
        }

        let mut index = AnnotationIndex::new();
        for (record, ann) in self.annotations.iter().enumerate() {
            let polys = match &ann.segmentation {
                None => continue,
                Some(Segmentation::Rle(_)) => {
                    return Err(Error::UnsupportedSegmentation {
                        annotation_id: ann.id,
                    })
                }
                Some(Segmentation::Polygons(p)) => p,
            };
            let polygons = polys
                .iter()
                .map(|flat| polygon_from_flat(flat))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Validation {
                    message: format!("annotation {}: {e}", ann.id),
                    records: vec![record],
                })?;
            index.entry(ann.image_id).or_default().push(ObjectAnnotation {
                annotation_id: ann.id,
                category_id: ann.category_id,
                polygons,
                bbox: ann.bbox,
                area: ann.area,
            });
        }
        Ok(index)
    }
}

/// Parses an annotation document and groups its polygon annotations by image id.
pub fn parse_coco_annotations(json: &[u8]) -> Result<AnnotationIndex> {
    CocoDataset::from_json(json)?.index()
}
