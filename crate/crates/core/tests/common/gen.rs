//! Seeded random instances shared by the oracle and acceptance suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vanish::evalharness::Detection;
use vanish::imagecore::{Dims, Grid, ImageBuffer, Kernel};
use vanish::segmask::PixelMask;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn image(rng: &mut impl Rng, w: usize, h: usize, c: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, c, |_, _, _| rng.gen::<f64>()).unwrap()
}

pub fn grid(rng: &mut impl Rng, dims: Dims) -> Grid {
    Grid::from_fn(dims, |_, _, _| rng.gen_range(-3.0..3.0))
}

pub fn kernel(rng: &mut impl Rng, k: usize) -> Kernel {
    Kernel::new(k, (0..k * k).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// A blob-shaped mask that leaves some background.
pub fn region_mask(rng: &mut impl Rng, w: usize, h: usize) -> PixelMask {
    let (cx, cy) = (rng.gen_range(0..w) as f64, rng.gen_range(0..h) as f64);
    let (rx, ry) = (rng.gen_range(1.0..w as f64 / 2.0), rng.gen_range(1.0..h as f64 / 2.0));
    let mut mask = PixelMask::from_fn(w, h, |x, y| {
        let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
        dx * dx + dy * dy <= 1.0
    });
    if mask.is_empty() {
        mask.set(cx as usize, cy as usize, true);
    }
    if mask.count() == w * h {
        mask.set(0, 0, false);
    }
    mask
}

/// Detections over a few images and categories with scores straddling common thresholds.
pub fn dump(rng: &mut impl Rng, images: u64, categories: u64, max_len: usize) -> Vec<Detection> {
    let n = rng.gen_range(0..=max_len);
    (0..n)
        .map(|_| Detection {
            image_id: rng.gen_range(1..=images),
            category_id: rng.gen_range(1..=categories),
            bbox: [
                rng.gen_range(0.0..50.0),
                rng.gen_range(0.0..50.0),
                rng.gen_range(1.0..30.0),
                rng.gen_range(1.0..30.0),
            ],
            score: (rng.gen_range(0..=20) as f64) / 20.0,
        })
        .collect()
}
