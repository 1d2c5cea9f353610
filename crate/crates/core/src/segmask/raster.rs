use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A boolean bitmap over an image grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::domain(format!(
                "mask length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.bits.get(index).copied().unwrap_or(false)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixel indices in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn union_with(&mut self, other: &PixelMask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }
}

/// Converts a COCO flat coordinate list `[x0, y0, x1, y1, ...]` to vertices.
pub fn polygon_from_flat(coords: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !coords.len().is_multiple_of(2) {
        return Err(Error::domain(format!(
            "polygon has an odd number of coordinates ({})",
            coords.len()
        )));
    }
    Ok(coords.chunks_exact(2).map(|p| (p[0], p[1])).collect())
}

/// Even-odd scanline fill sampled at pixel centers `(x + 0.5, y + 0.5)`.
///
/// An edge crosses a scanline when exactly one endpoint lies strictly below
/// it, so every closed polygon yields an even number of crossings per row.
pub fn rasterize_polygon(polygon: &[(f64, f64)], width: usize, height: usize) -> Result<PixelMask> {
    if polygon.len() < 3 {
        return Err(Error::domain(format!(
            "a polygon needs at least 3 vertices, got {}",
            polygon.len()
        )));
    }
    if polygon.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::domain("polygon vertices must be finite"));
    }
    let mut mask = PixelMask::empty(width, height);
    let mut crossings = Vec::with_capacity(polygon.len());
    for y in 0..height {
        let yc = y as f64 + 0.5;
        crossings.clear();
        let mut j = polygon.len() - 1;
        for i in 0..polygon.len() {
            let (xi, yi) = polygon[i];
            let (xj, yj) = polygon[j];
            if (yi > yc) != (yj > yc) {
                crossings.push((xj - xi) * (yc - yi) / (yj - yi) + xi);
            }
            j = i;
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        // A center is inside when an odd number of crossings lie at or left of it.
        let mut passed = 0;
        for x in 0..width {
            let xc = x as f64 + 0.5;
            while passed < crossings.len() && crossings[passed] <= xc {
                passed += 1;
            }
            if passed == crossings.len() {
                break;
            }
            if passed % 2 == 1 {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}
