//! Image buffers, pixel arithmetic, bilinear resampling, convolution and file I/O.

mod buffer;
mod conv;
mod interp;
pub mod io;

pub use buffer::{Dims, Grid, ImageBuffer};
pub use conv::{conv2d, conv2d_grid, conv_output_dims, Kernel};
pub use interp::{bilinear_interpolate, resize_bilinear, upsample, CornerQuad};
pub use io::{load_image, save_image};
