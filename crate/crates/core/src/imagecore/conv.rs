use crate::error::{Error, Result};
use crate::imagecore::{Dims, Grid, ImageBuffer};

/// A square `k × k` kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || weights.len() != size * size {
            return Err(Error::domain(format!(
                "kernel of size {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        Ok(Self { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `kernel[di, dj]`, `di` indexing rows.
    #[inline]
    pub fn at(&self, di: usize, dj: usize) -> f64 {
        self.weights[di * self.size + dj]
    }

    /// The kernel rotated by 180 degrees.
    pub fn flipped(&self) -> Kernel {
        let mut weights = self.weights.clone();
        weights.reverse();
        Kernel {
            size: self.size,
            weights,
        }
    }
}

/// Valid-padding strided convolution (cross-correlation form):
/// `out[i, j] = Σ_{di, dj < k} in[s·i + di, s·j + dj] · kernel[di, dj]`,
/// with channels summed. The output has a single channel.
pub fn conv2d(input: &ImageBuffer, kernel: &Kernel, stride: usize) -> Result<Grid> {
    conv2d_raw(input.data(), input.dims(), kernel, stride)
}

/// [`conv2d`] over an unconstrained grid.
pub fn conv2d_grid(input: &Grid, kernel: &Kernel, stride: usize) -> Result<Grid> {
    conv2d_raw(input.data(), input.dims(), kernel, stride)
}

/// Output dimensions of a valid convolution, or an error if the kernel does not fit.
pub fn conv_output_dims(input: Dims, kernel: usize, stride: usize) -> Result<Dims> {
    if stride == 0 {
        return Err(Error::domain("stride must be at least 1"));
    }
    if kernel > input.width || kernel > input.height {
        return Err(Error::domain(format!(
            "kernel {kernel}x{kernel} is larger than the {}x{} input",
            input.width, input.height
        )));
    }
    Ok(Dims::new(
        (input.width - kernel) / stride + 1,
        (input.height - kernel) / stride + 1,
        1,
    ))
}

fn conv2d_raw(data: &[f64], dims: Dims, kernel: &Kernel, stride: usize) -> Result<Grid> {
    let out_dims = conv_output_dims(dims, kernel.size, stride)?;
    let k = kernel.size;
    let c = dims.channels;
    let mut out = Vec::with_capacity(out_dims.len());
    for i in 0..out_dims.height {
        for j in 0..out_dims.width {
            let mut acc = 0.0;
            for di in 0..k {
                let row = stride * i + di;
                for dj in 0..k {
                    let col = stride * j + dj;
                    let w = kernel.at(di, dj);
                    let base = (row * dims.width + col) * c;
                    for ch in 0..c {
                        acc += data[base + ch] * w;
                    }
                }
            }
            out.push(acc);
        }
    }
    Grid::new(out_dims, out)
}
