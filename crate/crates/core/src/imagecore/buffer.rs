use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width, height and channel count of an image-shaped array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of channel `ch` of pixel `(x, y)` in an interleaved buffer.
    #[inline]
    pub fn index(&self, x: usize, y: usize, ch: usize) -> usize {
        (y * self.width + x) * self.channels + ch
    }

    fn validate_image(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain(format!(
                "image dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::domain(format!(
                "only 1 or 3 channels are supported, got {}",
                self.channels
            )));
        }
        Ok(())
    }
}

/// An image with channel-interleaved pixel values in `[0, 1]`.
///
/// Every write is clamped, so a buffer handed out by any public operation
/// always satisfies the range invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    dims: Dims,
    data: Vec<f64>,
}

impl ImageBuffer {
    /// Wraps `data`, clamping every value into `[0, 1]`. Non-finite values are rejected.
    pub fn new(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(width, height, channels);
        dims.validate_image()?;
        if data.len() != dims.len() {
            return Err(Error::domain(format!(
                "pixel buffer length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        for v in data.iter_mut() {
            if !v.is_finite() {
                return Err(Error::domain("pixel values must be finite"));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    data.push(f(x, y, ch));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Clamps a real-valued grid into an image.
    pub fn from_grid(grid: &Grid) -> Result<Self> {
        let d = grid.dims();
        Self::new(d.width, d.height, d.channels, grid.data().to_vec())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn channels(&self) -> usize {
        self.dims.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[self.dims.index(x, y, ch)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ch: usize, value: f64) {
        let i = self.dims.index(x, y, ch);
        self.data[i] = clamp_unit(value);
    }

    /// The channel vector of pixel number `p` in row-major order.
    pub fn pixel(&self, p: usize) -> &[f64] {
        let c = self.dims.channels;
        &self.data[p * c..(p + 1) * c]
    }

    pub fn set_pixel(&mut self, p: usize, values: &[f64]) {
        let c = self.dims.channels;
        for (dst, &v) in self.data[p * c..(p + 1) * c].iter_mut().zip(values) {
            *dst = clamp_unit(v);
        }
    }

    pub fn to_grid(&self) -> Grid {
        Grid {
            dims: self.dims,
            data: self.data.clone(),
        }
    }

    /// Single-channel image holding channel `ch`.
    pub fn channel(&self, ch: usize) -> ImageBuffer {
        let data = self.data.iter().skip(ch).step_by(self.dims.channels).copied().collect();
        ImageBuffer {
            dims: Dims::new(self.dims.width, self.dims.height, 1),
            data,
        }
    }
}

#[inline]
fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// An unconstrained real-valued array with image layout: gradients,
/// momentum buffers, perturbation deltas, feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: Dims,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::domain(format!(
                "grid buffer length {} does not match {}x{}x{}",
                data.len(),
                dims.width,
                dims.height,
                dims.channels
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for y in 0..dims.height {
            for x in 0..dims.width {
                for ch in 0..dims.channels {
                    data.push(f(x, y, ch));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[self.dims.index(x, y, ch)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ch: usize, value: f64) {
        let i = self.dims.index(x, y, ch);
        self.data[i] = value;
    }

    pub fn scale(&self, s: f64) -> Grid {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two grids of identical shape.
    pub fn zip_with(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        if self.dims != other.dims {
            return Err(Error::domain(format!(
                "shape mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Grid {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
