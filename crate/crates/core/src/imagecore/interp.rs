//! Bilinear interpolation on a corner quad and align-corners resampling.

use crate::error::{Error, Result};
use crate::imagecore::ImageBuffer;

/// The four known samples `Q11=(a1,b1)`, `Q12=(a1,b2)`, `Q21=(a2,b1)`,
/// `Q22=(a2,b2)` of a field `f`. `a` is horizontal, `b` vertical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerQuad {
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
    f11: f64,
    f12: f64,
    f21: f64,
    f22: f64,
}

impl CornerQuad {
    /// `values` is `[f11, f12, f21, f22]`.
    pub fn new(a1: f64, a2: f64, b1: f64, b2: f64, values: [f64; 4]) -> Result<Self> {
        let ordered = a1 < a2 && b1 < b2;
        if !ordered {
            return Err(Error::domain(format!(
                "degenerate quad: need a1 < a2 and b1 < b2, got a=[{a1}, {a2}] b=[{b1}, {b2}]"
            )));
        }
        let [f11, f12, f21, f22] = values;
        Ok(Self {
            a1,
            a2,
            b1,
            b2,
            f11,
            f12,
            f21,
            f22,
        })
    }

    pub fn a_range(&self) -> (f64, f64) {
        (self.a1, self.a2)
    }

    pub fn b_range(&self) -> (f64, f64) {
        (self.b1, self.b2)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.f11, self.f12, self.f21, self.f22]
    }
}

/// Interpolates along `a` on both horizontal edges, then along `b` between them.
pub fn bilinear_interpolate(q: &CornerQuad, a: f64, b: f64) -> Result<f64> {
    if !(q.a1 <= a && a <= q.a2 && q.b1 <= b && b <= q.b2) {
        return Err(Error::domain(format!(
            "({a}, {b}) lies outside the quad a=[{}, {}] b=[{}, {}]",
            q.a1, q.a2, q.b1, q.b2
        )));
    }
    let da = q.a2 - q.a1;
    let wa_lo = (q.a2 - a) / da;
    let wa_hi = (a - q.a1) / da;
    let f_b1 = wa_lo * q.f11 + wa_hi * q.f21;
    let f_b2 = wa_lo * q.f12 + wa_hi * q.f22;

    let db = q.b2 - q.b1;
    Ok((q.b2 - b) / db * f_b1 + (b - q.b1) / db * f_b2)
}

/// Integer-factor upsampling; output is `(w·factor) × (h·factor)`.
pub fn upsample(img: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    if factor == 0 {
        return Err(Error::domain("upsampling factor must be at least 1"));
    }
    resize_bilinear(img, img.width() * factor, img.height() * factor)
}

/// Bilinear resampling with align-corners mapping `src = dst·(src_dim−1)/(dst_dim−1)`.
pub fn resize_bilinear(img: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer> {
    if width == 0 || height == 0 {
        return Err(Error::domain("target dimensions must be positive"));
    }
    let c = img.channels();
    let mut data = Vec::with_capacity(width * height * c);
    for y in 0..height {
        let (sy, y0, y1) = source_coord(y, height, img.height());
        for x in 0..width {
            let (sx, x0, x1) = source_coord(x, width, img.width());
            for ch in 0..c {
                let quad = CornerQuad::new(
                    x0 as f64,
                    x0 as f64 + 1.0,
                    y0 as f64,
                    y0 as f64 + 1.0,
                    [
                        img.get(x0, y0, ch),
                        img.get(x0, y1, ch),
                        img.get(x1, y0, ch),
                        img.get(x1, y1, ch),
                    ],
                )?;
                data.push(bilinear_interpolate(&quad, sx, sy)?);
            }
        }
    }
    ImageBuffer::new(width, height, c, data)
}

/// Source coordinate plus the lower/upper sample indices bracketing it.
/// For a one-sample axis both indices are 0 and the quad spans `[0, 1]`.
fn source_coord(dst: usize, dst_dim: usize, src_dim: usize) -> (f64, usize, usize) {
    if src_dim == 1 {
        return (0.0, 0, 0);
    }
    let s = if dst_dim == 1 {
        0.0
    } else {
        dst as f64 * (src_dim - 1) as f64 / (dst_dim - 1) as f64
    };
    let lo = (s.floor() as usize).min(src_dim - 2);
    (s, lo, lo + 1)
}
