use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::ImageBuffer;
use crate::inversion::{inversion_loss, Classifier};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradProbe {
    pub target: usize,
    pub x: usize,
    pub y: usize,
    pub channel: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub probes: Vec<GradProbe>,
    /// Draws discarded because an activation boundary fell inside `±h`.
    pub resampled: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// `|a − n| / max(|a|, |n|)`, with magnitudes below `1e-8` treated as `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Redraws allowed per probe before a non-smooth draw is kept anyway.
const MAX_REDRAWS: usize = 32;

/// Compares `input_gradient` with central differences of `1 − p[target]`
/// on random images in `[0.1, 0.9]`, one random sample per probe. Draws whose
/// `±h` interval straddles a kink (see [`Classifier::smooth_between`]) are
/// redrawn, since central differences are meaningless there.
pub fn gradient_check(cls: &dyn Classifier, probe_count: usize, seed: u64) -> Result<GradCheckReport> {
    if probe_count == 0 {
        return Err(Error::domain("gradient check needs at least one probe"));
    }
    let d = cls.input_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(probe_count);
    let mut resampled = 0;
    while probes.len() < probe_count {
        let mut redraws = 0;
        let (img, plus, minus, target, x, y, channel) = loop {
            let img = ImageBuffer::from_fn(d.width, d.height, d.channels, |_, _, _| {
                rng.gen_range(0.1..0.9)
            })?;
            let target = rng.gen_range(0..cls.num_classes());
            let (x, y, channel) = (
                rng.gen_range(0..d.width),
                rng.gen_range(0..d.height),
                rng.gen_range(0..d.channels),
            );
            let v = img.get(x, y, channel);
            let mut plus = img.clone();
            plus.set(x, y, channel, v + FD_STEP);
            let mut minus = img.clone();
            minus.set(x, y, channel, v - FD_STEP);
            if redraws == MAX_REDRAWS || cls.smooth_between(&plus, &minus) {
                break (img, plus, minus, target, x, y, channel);
            }
            redraws += 1;
            resampled += 1;
        };
        let analytic = cls.input_gradient(&img, target)?.get(x, y, channel);
        let lp = inversion_loss(&cls.forward(&plus)?, target)?;
        let lm = inversion_loss(&cls.forward(&minus)?, target)?;
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        probes.push(GradProbe {
            target,
            x,
            y,
            channel,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        probes,
        resampled,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_edges() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 0.9) - 0.1).abs() < 1e-12);
        assert!((relative_error(0.0, 0.5) - 1.0).abs() < 1e-12);
    }
}
