//! Neighbor background pixel replacement.
//!
//! Every `step`-th target pixel (row-major scan of the region) takes the full
//! channel vector of its nearest background pixel. The number of replaced
//! pixels never exceeds `epsilon` times the region size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::ImageBuffer;
use crate::segmask::{PixelMask, TargetRegion};

pub const DEFAULT_EPSILON: f64 = 0.25;
pub const DEFAULT_STEP: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementPlan {
    pub width: usize,
    pub height: usize,
    pub step: usize,
    pub epsilon: f64,
    pub region_size: usize,
    /// `(target, source)` row-major pixel indices.
    pub pairs: Vec<(usize, usize)>,
}

impl ReplacementPlan {
    /// Fraction of the region that the plan overwrites.
    pub fn ratio(&self) -> f64 {
        if self.region_size == 0 {
            0.0
        } else {
            self.pairs.len() as f64 / self.region_size as f64
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }
}

/// Largest `k ≤ candidates` with `k / region ≤ epsilon`.
fn replacement_ceiling(region: usize, epsilon: f64, candidates: usize) -> usize {
    let mut k = ((epsilon * region as f64).floor() as usize).min(candidates);
    while k > 0 && k as f64 / region as f64 > epsilon {
        k -= 1;
    }
    while k < candidates && (k + 1) as f64 / region as f64 <= epsilon {
        k += 1;
    }
    k
}

pub fn plan_replacement(
    img: &ImageBuffer,
    region: &TargetRegion,
    step: usize,
    epsilon: f64,
) -> Result<ReplacementPlan> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if step == 0 {
        return Err(Error::domain("step must be at least 1"));
    }
    let (w, h) = (img.width(), img.height());
    let mask = region.mask();
    if mask.width() != w || mask.height() != h {
        return Err(Error::domain(format!(
            "region is {}x{} but the image is {w}x{h}",
            mask.width(),
            mask.height()
        )));
    }
    let region_pixels: Vec<usize> = mask.indices().collect();
    if region_pixels.len() == w * h {
        return Err(Error::NoBackground);
    }
    let candidates = region_pixels.len().div_ceil(step);
    let keep = replacement_ceiling(region_pixels.len(), epsilon, candidates);

    let pairs = region_pixels
        .iter()
        .step_by(step)
        .take(keep)
        .map(|&p| {
            let src = nearest_background(mask, p % w, p / w).ok_or(Error::NoBackground)?;
            Ok((p, src))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ReplacementPlan {
        width: w,
        height: h,
        step,
        epsilon,
        region_size: region_pixels.len(),
        pairs,
    })
}

/// Nearest pixel outside `mask` in Chebyshev distance; among equals, the
/// smallest `(row, col)`. Rings are scanned row-major, so the first hit wins.
pub fn nearest_background(mask: &PixelMask, x: usize, y: usize) -> Option<usize> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let (x, y) = (x as i64, y as i64);
    let max_d = w.max(h);
    for d in 1..=max_d {
        for row in (y - d)..=(y + d) {
            if row < 0 || row >= h {
                continue;
            }
            let edge_row = row == y - d || row == y + d;
            let check = |col: i64| -> Option<usize> {
                if col < 0 || col >= w {
                    return None;
                }
                let p = (row * w + col) as usize;
                (!mask.contains(p)).then_some(p)
            };
            if edge_row {
                for col in (x - d)..=(x + d) {
                    if let Some(p) = check(col) {
                        return Some(p);
                    }
                }
            } else {
                if let Some(p) = check(x - d) {
                    return Some(p);
                }
                if let Some(p) = check(x + d) {
                    return Some(p);
                }
            }
        }
    }
    None
}

/// `T(X)`: copies each source pixel onto its target; everything else is untouched.
pub fn apply_replacement(img: &ImageBuffer, plan: &ReplacementPlan) -> Result<ImageBuffer> {
    if img.width() != plan.width || img.height() != plan.height {
        return Err(Error::domain(format!(
            "plan was built for {}x{} but the image is {}x{}",
            plan.width,
            plan.height,
            img.width(),
            img.height()
        )));
    }
    let mut out = img.clone();
    for &(target, source) in &plan.pairs {
        out.set_pixel(target, img.pixel(source));
    }
    Ok(out)
}
