use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `[x, y, width, height]` in pixels.
pub type BBox = [f64; 4];

/// One record of a COCO results dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    fn problem(&self) -> Option<String> {
        let [x, y, w, h] = self.bbox;
        if ![x, y, w, h, self.score].iter().all(|v| v.is_finite()) {
            Some("non-finite value".into())
        } else if w <= 0.0 || h <= 0.0 {
            Some(format!("box size {w}x{h} is not positive"))
        } else if !(0.0..=1.0).contains(&self.score) {
            Some(format!("score {} outside [0, 1]", self.score))
        } else {
            None
        }
    }
}

/// Detections in input order, indexed by image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    detections: Vec<Detection>,
    by_image: BTreeMap<u64, Vec<usize>>,
}

impl DetectionSet {
    pub fn new(detections: Vec<Detection>) -> Result<Self> {
        let bad: Vec<(usize, String)> = detections
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.problem().map(|p| (i, p)))
            .collect();
        if let Some((first, why)) = bad.first() {
            return Err(Error::Validation {
                message: format!("{} invalid detection record(s); record {first}: {why}", bad.len()),
                records: bad.iter().map(|(i, _)| *i).collect(),
            });
        }
        let mut by_image: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, d) in detections.iter().enumerate() {
            by_image.entry(d.image_id).or_default().push(i);
        }
        Ok(Self {
            detections,
            by_image,
        })
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    /// Image ids in increasing order.
    pub fn image_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.by_image.keys().copied()
    }

    pub fn for_image(&self, image_id: u64) -> impl Iterator<Item = &Detection> + '_ {
        self.by_image
            .get(&image_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.detections[i])
    }

    /// Detections with `score ≥ threshold`.
    pub fn above(&self, threshold: f64) -> impl Iterator<Item = &Detection> + '_ {
        self.detections.iter().filter(move |d| d.score >= threshold)
    }

    /// Keeps only detections whose image satisfies `keep`.
    pub fn retain_images(&self, keep: impl Fn(u64) -> bool) -> DetectionSet {
        let kept = self
            .detections
            .iter()
            .filter(|d| keep(d.image_id))
            .cloned()
            .collect();
        DetectionSet::new(kept).expect("subset of a valid set")
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(&self.detections)?)
    }
}

/// Parses a COCO results array. Unknown fields (e.g. `segmentation`) are ignored.
pub fn parse_detections(bytes: &[u8]) -> Result<DetectionSet> {
    let raw: Vec<serde_json::Value> = serde_json::from_slice(bytes)?;
    let mut detections = Vec::with_capacity(raw.len());
    let mut bad = Vec::new();
    let mut first_problem = None;
    for (i, v) in raw.into_iter().enumerate() {
        match serde_json::from_value::<Detection>(v) {
            Ok(d) => {
                if let Some(p) = d.problem() {
                    first_problem.get_or_insert(format!("record {i}: {p}"));
                    bad.push(i);
                }
                detections.push(d);
            }
            Err(e) => {
                first_problem.get_or_insert(format!("record {i}: {e}"));
                bad.push(i);
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Validation {
            message: format!(
                "{} invalid detection record(s); {}",
                bad.len(),
                first_problem.unwrap_or_default()
            ),
            records: bad,
        });
    }
    DetectionSet::new(detections)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_groups_by_image() {
        let json = br#"[
            {"image_id": 1, "category_id": 18, "bbox": [0, 0, 10, 10], "score": 0.9},
            {"image_id": 2, "category_id": 1, "bbox": [5, 5, 3, 4], "score": 0.4},
            {"image_id": 1, "category_id": 17, "bbox": [2, 2, 6, 6], "score": 0.2, "segmentation": []}
        ]"#;
        let set = parse_detections(json).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.image_ids().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(set.for_image(1).count(), 2);
        assert_eq!(set.above(0.3).count(), 2);
    }

    #[test]
    fn empty_and_invalid() {
        assert!(parse_detections(b"[]").unwrap().is_empty());
        let json = br#"[
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, -1, 3], "score": 0.5},
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 3], "score": 0.5},
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 3], "score": 1.5},
            {"image_id": 1, "bbox": [0, 0, 1, 3], "score": 0.5}
        ]"#;
        match parse_detections(json) {
            Err(Error::Validation { records, .. }) => assert_eq!(records, vec![0, 2, 3]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_detections(b"[{"), Err(Error::Json { .. })));
    }
}
