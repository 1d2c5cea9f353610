use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::io::quantize;
use crate::imagecore::ImageBuffer;
use crate::segmask::coco::ObjectAnnotation;
use crate::segmask::raster::{rasterize_polygon, PixelMask};

pub type Rgb = [u8; 3];

/// Injective map from class id to paint color. Class 0 is background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, Rgb>", into = "BTreeMap<u32, Rgb>")]
pub struct Palette {
    colors: BTreeMap<u32, Rgb>,
}

impl Palette {
    pub fn new(colors: BTreeMap<u32, Rgb>) -> Result<Self> {
        let mut seen: HashMap<Rgb, u32> = HashMap::new();
        for (&id, &rgb) in &colors {
            if let Some(prev) = seen.insert(rgb, id) {
                return Err(Error::domain(format!(
                    "palette is not injective: classes {prev} and {id} share color {rgb:?}"
                )));
            }
        }
        Ok(Self { colors })
    }

    /// The VOC colormap (bit-interleaved class index), covering ids 0..=255.
    /// Ids 0..=20 are the familiar 21 VOC colors; 0 is black.
    pub fn voc() -> Self {
        let colors = (0u32..256)
            .map(|id| {
                let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
                let mut c = id;
                for j in 0..8 {
                    r |= ((c & 1) as u8) << (7 - j);
                    g |= (((c >> 1) & 1) as u8) << (7 - j);
                    b |= (((c >> 2) & 1) as u8) << (7 - j);
                    c >>= 3;
                }
                (id, [r, g, b])
            })
            .collect();
        Self { colors }
    }

    /// VOC palette with some entries replaced; the result must stay injective.
    pub fn voc_with_overrides(overrides: &BTreeMap<u32, Rgb>) -> Result<Self> {
        let mut colors = Self::voc().colors;
        colors.extend(overrides.iter().map(|(&k, &v)| (k, v)));
        Self::new(colors)
    }

    pub fn color(&self, class: u32) -> Option<Rgb> {
        self.colors.get(&class).copied()
    }

    pub fn class_of(&self, rgb: Rgb) -> Option<u32> {
        self.colors
            .iter()
            .find_map(|(&id, &c)| (c == rgb).then_some(id))
    }
}

impl Default for Palette {
    fn default() -> Self {
        Self::voc()
    }
}

impl TryFrom<BTreeMap<u32, Rgb>> for Palette {
    type Error = Error;

    fn try_from(colors: BTreeMap<u32, Rgb>) -> Result<Self> {
        Palette::new(colors)
    }
}

impl From<Palette> for BTreeMap<u32, Rgb> {
    fn from(p: Palette) -> Self {
        p.colors
    }
}

/// Per-pixel class ids aligned to an image, plus the palette they are painted with.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    class_ids: Vec<u32>,
    palette: Palette,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, class_ids: Vec<u32>, palette: Palette) -> Result<Self> {
        if class_ids.len() != width * height {
            return Err(Error::domain(format!(
                "class grid length {} does not match {width}x{height}",
                class_ids.len()
            )));
        }
        if let Some(&id) = class_ids
            .iter()
            .find(|&&id| id != 0 && palette.color(id).is_none())
        {
            return Err(Error::domain(format!("class {id} has no palette color")));
        }
        Ok(Self {
            width,
            height,
            class_ids,
            palette,
        })
    }

    /// Rasterizes annotations in order; later objects overwrite earlier ones.
    pub fn from_annotations(
        annotations: &[ObjectAnnotation],
        width: usize,
        height: usize,
        palette: Palette,
    ) -> Result<Self> {
        let mut class_ids = vec![0u32; width * height];
        for ann in annotations {
            let class = u32::try_from(ann.category_id)
                .map_err(|_| Error::domain(format!("category id {} too large", ann.category_id)))?;
            let mut covered = PixelMask::empty(width, height);
            for poly in &ann.polygons {
                covered.union_with(&rasterize_polygon(poly, width, height)?);
            }
            for p in covered.indices() {
                class_ids[p] = class;
            }
        }
        Self::new(width, height, class_ids, palette)
    }

    /// Decodes a painted RGB mask back into class ids through the palette.
    pub fn from_painted(img: &ImageBuffer, palette: Palette) -> Result<Self> {
        if img.channels() != 3 {
            return Err(Error::domain("painted masks must be RGB"));
        }
        let reverse: HashMap<Rgb, u32> = palette.colors.iter().map(|(&k, &v)| (v, k)).collect();
        let mut class_ids = Vec::with_capacity(img.width() * img.height());
        let mut unknown = Vec::new();
        for p in 0..img.width() * img.height() {
            let px = img.pixel(p);
            let rgb = [quantize(px[0]), quantize(px[1]), quantize(px[2])];
            match reverse.get(&rgb) {
                Some(&id) => class_ids.push(id),
                None => {
                    unknown.push(p);
                    class_ids.push(0);
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::Validation {
                message: format!(
                    "{} pixels carry colors outside the palette (first at pixel {})",
                    unknown.len(),
                    unknown[0]
                ),
                records: unknown,
            });
        }
        Self::new(img.width(), img.height(), class_ids, palette)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    #[inline]
    pub fn class_at(&self, x: usize, y: usize) -> u32 {
        self.class_ids[y * self.width + x]
    }

    pub fn label_mask(&self, label: u32) -> PixelMask {
        PixelMask::from_fn(self.width, self.height, |x, y| self.class_at(x, y) == label)
    }
}

/// Paints each pixel with its class color; background is black.
pub fn paint_mask(mask: &SegmentationMask) -> ImageBuffer {
    let mut data = Vec::with_capacity(mask.class_ids.len() * 3);
    for &id in &mask.class_ids {
        let rgb = if id == 0 {
            [0, 0, 0]
        } else {
            // Presence is a construction invariant.
            mask.palette.color(id).unwrap_or([0, 0, 0])
        };
        data.extend(rgb.iter().map(|&c| c as f64 / 255.0));
    }
    ImageBuffer::new(mask.width, mask.height, 3, data).expect("mask dimensions are validated")
}

/// Inclusive pixel bounds: top/bottom rows, left/right columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionBox {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl RegionBox {
    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.left..=self.right).contains(&x) && (self.top..=self.bottom).contains(&y)
    }
}

/// A located object: its pixels and their tight bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRegion {
    label: u32,
    mask: PixelMask,
    bbox: RegionBox,
}

impl TargetRegion {
    pub fn from_mask(label: u32, mask: PixelMask) -> Result<Self> {
        let mut bbox: Option<RegionBox> = None;
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if !mask.get(x, y) {
                    continue;
                }
                bbox = Some(match bbox {
                    None => RegionBox {
                        top: y,
                        bottom: y,
                        left: x,
                        right: x,
                    },
                    Some(b) => RegionBox {
                        top: b.top.min(y),
                        bottom: b.bottom.max(y),
                        left: b.left.min(x),
                        right: b.right.max(x),
                    },
                });
            }
        }
        let bbox = bbox.ok_or(Error::TargetNotFound(label))?;
        Ok(Self { label, mask, bbox })
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn mask(&self) -> &PixelMask {
        &self.mask
    }

    pub fn bbox(&self) -> RegionBox {
        self.bbox
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.count()
    }

    pub fn summary(&self) -> RegionSummary {
        RegionSummary {
            label: self.label,
            bbox: self.bbox,
            pixel_count: self.pixel_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub label: u32,
    pub bbox: RegionBox,
    pub pixel_count: usize,
}

/// All pixels of `label`, disconnected components included, as one region.
pub fn locate_target(mask: &SegmentationMask, label: u32) -> Result<TargetRegion> {
    if label == 0 {
        return Err(Error::domain("label 0 is background"));
    }
    TargetRegion::from_mask(label, mask.label_mask(label))
}

/// Locates `label` in a painted image by matching its palette color exactly.
pub fn locate_by_color(painted: &ImageBuffer, palette: &Palette, label: u32) -> Result<TargetRegion> {
    if label == 0 {
        return Err(Error::domain("label 0 is background"));
    }
    if painted.channels() != 3 {
        return Err(Error::domain("painted masks must be RGB"));
    }
    let rgb = palette
        .color(label)
        .ok_or_else(|| Error::domain(format!("class {label} has no palette color")))?;
    let mask = PixelMask::from_fn(painted.width(), painted.height(), |x, y| {
        let p = painted.pixel(y * painted.width() + x);
        [quantize(p[0]), quantize(p[1]), quantize(p[2])] == rgb
    });
    TargetRegion::from_mask(label, mask)
}

/// One region per 4-connected component of `label`, ordered by first pixel in scan order.
pub fn locate_instances(mask: &SegmentationMask, label: u32) -> Result<Vec<TargetRegion>> {
    if label == 0 {
        return Err(Error::domain("label 0 is background"));
    }
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || mask.class_ids[start] != label {
            continue;
        }
        let mut comp = PixelMask::empty(w, h);
        seen[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            comp.set(x, y, true);
            let mut visit = |q: usize| {
                if !seen[q] && mask.class_ids[q] == label {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        regions.push(TargetRegion::from_mask(label, comp)?);
    }
    if regions.is_empty() {
        return Err(Error::TargetNotFound(label));
    }
    Ok(regions)
}
