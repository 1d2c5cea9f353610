//! Stripe-mask selection of reconstructed features and adversarial composition.
//!
//! Vertical stripes are column bands `[:, s..s+m]`, horizontal stripes are
//! row bands `[s..s+n, :]`. The perturbation `R` lives on their union and is
//! projected onto the L2 ball of radius `eta` by uniform scaling. Composition
//! adds `R` inside a window of the target's bounding box whose top-left corner
//! is shifted by the offset `(i, j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{Dims, Grid, ImageBuffer};
use crate::segmask::{PixelMask, RegionBox, RegionSummary, TargetRegion};

pub const DEFAULT_ETA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Column bands.
    Vertical,
    /// Row bands.
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripeMask {
    pub orientation: Orientation,
    /// Band size across the stripe axis (`m` for vertical, `n` for horizontal).
    pub thickness: usize,
    pub offsets: Vec<usize>,
    pub dims: Dims,
}

impl StripeMask {
    fn new(orientation: Orientation, thickness: usize, stride: usize, dims: Dims) -> Result<Self> {
        if thickness == 0 {
            return Err(Error::domain("stripe thickness must be at least 1"));
        }
        if stride < thickness {
            return Err(Error::StripeOverlap {
                stride,
                band: thickness,
            });
        }
        let extent = match orientation {
            Orientation::Vertical => dims.width,
            Orientation::Horizontal => dims.height,
        };
        let offsets = (0..extent).step_by(stride).collect();
        Ok(Self {
            orientation,
            thickness,
            offsets,
            dims,
        })
    }

    /// Whether pixel `(x, y)` lies inside a band.
    pub fn covers(&self, x: usize, y: usize) -> bool {
        let t = match self.orientation {
            Orientation::Vertical => x,
            Orientation::Horizontal => y,
        };
        // Offsets are increasing and bands do not overlap: only the last offset ≤ t can cover it.
        match self.offsets.partition_point(|&s| s <= t) {
            0 => false,
            k => t < self.offsets[k - 1] + self.thickness,
        }
    }

    pub fn active(&self) -> PixelMask {
        PixelMask::from_fn(self.dims.width, self.dims.height, |x, y| self.covers(x, y))
    }
}

/// Stripe geometry: `n` is the horizontal band thickness, `m` the vertical band width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripeSpec {
    pub n: usize,
    pub m: usize,
    pub vertical_stride: usize,
    pub horizontal_stride: usize,
}

impl Default for StripeSpec {
    fn default() -> Self {
        Self::alternating(1, 10)
    }
}

impl StripeSpec {
    /// Bands separated by gaps of their own size (stride `2m` and `2n`).
    pub fn alternating(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            vertical_stride: 2 * m,
            horizontal_stride: 2 * n,
        }
    }

    pub fn build(&self, dims: Dims) -> Result<(StripeMask, StripeMask)> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::domain("stripe sizes n and m must be at least 1"));
        }
        Ok((
            StripeMask::new(Orientation::Vertical, self.m, self.vertical_stride, dims)?,
            StripeMask::new(Orientation::Horizontal, self.n, self.horizontal_stride, dims)?,
        ))
    }
}

/// `(vertical, horizontal)` masks sharing one stride.
pub fn build_stripe_masks(dims: Dims, n: usize, m: usize, stride: usize) -> Result<(StripeMask, StripeMask)> {
    StripeSpec {
        n,
        m,
        vertical_stride: stride,
        horizontal_stride: stride,
    }
    .build(dims)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractMode {
    /// `R = S* − baseline` on stripes; composition adds it.
    #[default]
    Delta,
    /// `R = S*` on stripes; composition pastes it.
    Copy,
}

impl std::str::FromStr for ExtractMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(ExtractMode::Delta),
            "copy" => Ok(ExtractMode::Copy),
            _ => Err(Error::domain(format!("unknown extract mode {s:?} (delta | copy)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Zero outside `active`.
    pub delta: Grid,
    pub active: PixelMask,
    pub masks: (StripeMask, StripeMask),
    pub eta: f64,
    pub mode: ExtractMode,
    /// Norm before projection.
    pub raw_l2: f64,
    /// Factor applied by the projection, in `(0, 1]`.
    pub scale: f64,
    pub anchor: Option<RegionSummary>,
}

impl Perturbation {
    pub fn l2(&self) -> f64 {
        self.delta.l2_norm()
    }
}

pub fn extract_perturbation(
    s_star: &ImageBuffer,
    baseline: &ImageBuffer,
    masks: (&StripeMask, &StripeMask),
    eta: f64,
    mode: ExtractMode,
) -> Result<Perturbation> {
    let dims = s_star.dims();
    if baseline.dims() != dims {
        return Err(Error::domain(format!(
            "sample is {:?} but the baseline is {:?}",
            dims,
            baseline.dims()
        )));
    }
    if masks.0.dims != dims || masks.1.dims != dims {
        return Err(Error::domain("stripe masks were built for different dimensions"));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::domain(format!("eta must be a non-negative number, got {eta}")));
    }
    let mut active = masks.0.active();
    active.union_with(&masks.1.active());

    let mut delta = Grid::zeros(dims);
    for p in active.indices() {
        let (x, y) = (p % dims.width, p / dims.width);
        for c in 0..dims.channels {
            let v = match mode {
                ExtractMode::Delta => s_star.get(x, y, c) - baseline.get(x, y, c),
                ExtractMode::Copy => s_star.get(x, y, c),
            };
            delta.set(x, y, c, v);
        }
    }
    let raw_l2 = delta.l2_norm();
    let mut scale = 1.0;
    if raw_l2 > eta {
        scale = eta / raw_l2;
        let mut projected = delta.scale(scale);
        // Rounding can leave the norm an ulp above the budget.
        while projected.l2_norm() > eta {
            scale *= 1.0 - f64::EPSILON * 4.0;
            projected = delta.scale(scale);
        }
        delta = projected;
    }
    Ok(Perturbation {
        delta,
        active,
        masks: (masks.0.clone(), masks.1.clone()),
        eta,
        mode,
        raw_l2,
        scale,
        anchor: None,
    })
}

/// Window `[t+i ..= b] × [l+j ..= r]` clipped to the bounding box and image.
pub fn composition_window(region: &TargetRegion, offset: (i64, i64)) -> Result<RegionBox> {
    let b = region.bbox();
    let top = (b.top as i64 + offset.0).max(b.top as i64);
    let left = (b.left as i64 + offset.1).max(b.left as i64);
    let bottom = b.bottom.min(region.height() - 1) as i64;
    let right = b.right.min(region.width() - 1) as i64;
    if top > bottom || left > right {
        return Err(Error::EmptyWindow(offset.0, offset.1));
    }
    Ok(RegionBox {
        top: top as usize,
        bottom: bottom as usize,
        left: left as usize,
        right: right as usize,
    })
}

/// Applies `R` to `base` on window ∩ stripes; every other pixel is copied bit-exactly.
pub fn compose_adversarial(
    base: &ImageBuffer,
    r: &Perturbation,
    region: &TargetRegion,
    offset: (i64, i64),
) -> Result<ImageBuffer> {
    let dims = base.dims();
    if r.delta.dims() != dims {
        return Err(Error::domain("perturbation and base image differ in shape"));
    }
    if region.width() != dims.width || region.height() != dims.height {
        return Err(Error::domain("region and base image differ in size"));
    }
    let window = composition_window(region, offset)?;
    let mut out = base.clone();
    for y in window.top..=window.bottom {
        for x in window.left..=window.right {
            if !r.active.get(x, y) {
                continue;
            }
            for c in 0..dims.channels {
                let v = match r.mode {
                    ExtractMode::Delta => base.get(x, y, c) + r.delta.get(x, y, c),
                    ExtractMode::Copy => r.delta.get(x, y, c),
                };
                out.set(x, y, c, v);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub l2: f64,
    pub linf: f64,
    /// Pixels with at least one changed channel.
    pub changed_pixels: usize,
    pub changed_ratio: f64,
}

pub fn perturbation_report(x: &ImageBuffer, x_adv: &ImageBuffer) -> Result<PerturbationReport> {
    if x.dims() != x_adv.dims() {
        return Err(Error::domain("images differ in shape"));
    }
    let c = x.channels();
    let (mut sq, mut linf, mut changed) = (0.0, 0.0f64, 0);
    for p in 0..x.width() * x.height() {
        let mut any = false;
        for (a, b) in x.pixel(p).iter().zip(x_adv.pixel(p)) {
            let d = b - a;
            sq += d * d;
            linf = linf.max(d.abs());
            any |= d != 0.0;
        }
        changed += any as usize;
    }
    debug_assert!(c > 0);
    Ok(PerturbationReport {
        l2: sq.sqrt(),
        linf,
        changed_pixels: changed,
        changed_ratio: changed as f64 / (x.width() * x.height()) as f64,
    })
}

/// Grayscale image of the per-pixel maximum absolute channel difference.
pub fn difference_heatmap(x: &ImageBuffer, x_adv: &ImageBuffer) -> Result<ImageBuffer> {
    if x.dims() != x_adv.dims() {
        return Err(Error::domain("images differ in shape"));
    }
    let data = (0..x.width() * x.height())
        .map(|p| {
            x.pixel(p)
                .iter()
                .zip(x_adv.pixel(p))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .collect();
    ImageBuffer::new(x.width(), x.height(), 1, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationManifest {
    pub dims: Dims,
    pub mode: ExtractMode,
    pub eta: f64,
    pub raw_l2: f64,
    pub scale: f64,
    pub l2: f64,
    pub vertical: StripeMask,
    pub horizontal: StripeMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<RegionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<(i64, i64)>,
    /// `R` on the stripe union: active pixels in row-major order, channels interleaved.
    pub values: Vec<f64>,
}

impl Perturbation {
    pub fn manifest(&self, offset: Option<(i64, i64)>) -> PerturbationManifest {
        let c = self.delta.dims().channels;
        let values = self
            .active
            .indices()
            .flat_map(|p| self.delta.data()[p * c..(p + 1) * c].iter().copied())
            .collect();
        PerturbationManifest {
            dims: self.delta.dims(),
            mode: self.mode,
            eta: self.eta,
            raw_l2: self.raw_l2,
            scale: self.scale,
            l2: self.l2(),
            vertical: self.masks.0.clone(),
            horizontal: self.masks.1.clone(),
            anchor: self.anchor.clone(),
            offset,
            values,
        }
    }

    pub fn to_json(&self, offset: Option<(i64, i64)>) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(&self.manifest(offset))?)
    }

    /// Lossless inverse of [`Perturbation::to_json`].
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: PerturbationManifest = serde_json::from_slice(bytes)?;
        if m.vertical.dims != m.dims || m.horizontal.dims != m.dims {
            return Err(Error::domain("stripe masks disagree with the manifest dimensions"));
        }
        let mut active = m.vertical.active();
        active.union_with(&m.horizontal.active());
        let c = m.dims.channels;
        if m.values.len() != active.count() * c {
            return Err(Error::domain(format!(
                "manifest holds {} values but the stripes need {}",
                m.values.len(),
                active.count() * c
            )));
        }
        let mut delta = Grid::zeros(m.dims);
        for (k, p) in active.indices().enumerate() {
            delta.data_mut()[p * c..(p + 1) * c].copy_from_slice(&m.values[k * c..(k + 1) * c]);
        }
        Ok(Perturbation {
            delta,
            active,
            masks: (m.vertical, m.horizontal),
            eta: m.eta,
            mode: m.mode,
            raw_l2: m.raw_l2,
            scale: m.scale,
            anchor: m.anchor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_coverage() {
        let dims = Dims::new(100, 30, 3);
        let (v, h) = build_stripe_masks(dims, 1, 10, 20).unwrap();
        assert_eq!(v.offsets, vec![0, 20, 40, 60, 80]);
        let cols = (0..100).filter(|&x| v.covers(x, 0)).count();
        assert_eq!(cols, 50);
        assert_eq!(h.offsets, vec![0, 20]);
        assert_eq!((0..30).filter(|&y| h.covers(0, y)).count(), 2);
    }

    #[test]
    fn full_cover_and_degenerate() {
        let dims = Dims::new(12, 7, 1);
        let (v, _) = build_stripe_masks(dims, 1, 12, 12).unwrap();
        assert_eq!(v.offsets, vec![0]);
        assert_eq!(v.active().count(), 84);

        let one = Dims::new(1, 1, 3);
        let (v, h) = build_stripe_masks(one, 1, 10, 20).unwrap();
        assert_eq!(v.active().count(), 1);
        assert_eq!(h.active().count(), 1);
    }

    #[test]
    fn overlap_rejected() {
        let dims = Dims::new(10, 10, 1);
        assert!(matches!(
            build_stripe_masks(dims, 1, 5, 4),
            Err(Error::StripeOverlap { stride: 4, band: 5 })
        ));
        assert!(build_stripe_masks(dims, 0, 5, 5).is_err());
    }

    #[test]
    fn identical_images_give_zero_perturbation() {
        let img = ImageBuffer::from_fn(8, 8, 3, |x, y, c| ((x + y + c) % 4) as f64 / 4.0).unwrap();
        let (v, h) = StripeSpec::alternating(1, 2).build(img.dims()).unwrap();
        let r = extract_perturbation(&img, &img, (&v, &h), 1.0, ExtractMode::Delta).unwrap();
        assert_eq!(r.l2(), 0.0);
        assert_eq!(r.scale, 1.0);
    }

    #[test]
    fn projection_halves_unit_delta() {
        let dims = Dims::new(4, 1, 1);
        let base = ImageBuffer::zeros(4, 1, 1).unwrap();
        let s = ImageBuffer::new(4, 1, 1, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let (v, h) = build_stripe_masks(dims, 1, 4, 4).unwrap();
        let r = extract_perturbation(&s, &base, (&v, &h), 0.5, ExtractMode::Delta).unwrap();
        assert!((r.l2() - 0.5).abs() < 1e-12);
        assert!(r.l2() <= 0.5);
        assert!((r.scale - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_values() {
        let x = ImageBuffer::zeros(3, 3, 3).unwrap();
        assert_eq!(
            perturbation_report(&x, &x).unwrap(),
            PerturbationReport {
                l2: 0.0,
                linf: 0.0,
                changed_pixels: 0,
                changed_ratio: 0.0
            }
        );
        let mut y = x.clone();
        y.set(1, 2, 1, 0.5);
        let r = perturbation_report(&x, &y).unwrap();
        assert_eq!((r.l2, r.linf, r.changed_pixels), (0.5, 0.5, 1));
        let heat = difference_heatmap(&x, &y).unwrap();
        assert_eq!(heat.get(1, 2, 0), 0.5);
    }

    #[test]
    fn window_clipping() {
        let mask = PixelMask::from_fn(8, 8, |x, y| (2..=6).contains(&x) && (1..=5).contains(&y));
        let region = TargetRegion::from_mask(1, mask).unwrap();
        let w = composition_window(&region, (2, 3)).unwrap();
        assert_eq!(
            w,
            RegionBox {
                top: 3,
                bottom: 5,
                left: 5,
                right: 6
            }
        );
        assert_eq!(composition_window(&region, (-4, -1)).unwrap(), region.bbox());
        assert!(matches!(
            composition_window(&region, (5, 0)),
            Err(Error::EmptyWindow(5, 0))
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let base = ImageBuffer::filled(6, 5, 3, 0.5).unwrap();
        let s = ImageBuffer::from_fn(6, 5, 3, |x, y, c| ((x * 3 + y + c) % 7) as f64 / 6.0).unwrap();
        let (v, h) = StripeSpec::alternating(1, 2).build(base.dims()).unwrap();
        let r = extract_perturbation(&s, &base, (&v, &h), 2.0, ExtractMode::Delta).unwrap();
        let json = r.to_json(Some((0, 0))).unwrap();
        assert_eq!(Perturbation::from_json(&json).unwrap(), r);
        assert_eq!(r.to_json(Some((0, 0))).unwrap(), json);
    }
}
