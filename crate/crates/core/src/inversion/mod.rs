//! Label-fixed sample reconstruction by model inversion.
//!
//! Starting from an all-zero image `S` and zero momentum `V`, each iteration
//! takes `g = ∇_S (1 − C(S)[target])`, sets `V ← λ1·g + λ2·V`, and steps
//! `S ← clamp((1 − α)·S − β·V)`. The total variation of `S` is logged per
//! iteration as a smoothness diagnostic.

mod classifier;
mod gradcheck;
mod toy;
pub mod weights;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{Grid, ImageBuffer};

pub use classifier::{softmax, Classifier, LinearSoftmax};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, GradProbe, FD_STEP};
pub use toy::{
    shape_dataset, ToyClassifier, ToyTrainConfig, TrainReport, DEFAULT_SEED, SHAPE_CLASSES, STANDARDIZE_EPS,
};

/// `1 − probs[target]`.
pub fn inversion_loss(probs: &[f64], target: usize) -> Result<f64> {
    probs
        .get(target)
        .map(|p| 1.0 - p)
        .ok_or_else(|| Error::domain(format!("class index {target} out of range for {} classes", probs.len())))
}

/// `λ1·grad + λ2·V`, elementwise.
pub fn momentum_update(v: &Grid, grad: &Grid, cfg: &InversionConfig) -> Result<Grid> {
    let (l1, l2) = (cfg.lambda1, cfg.lambda2);
    grad.zip_with(v, |g, v| l1 * g + l2 * v)
}

/// Anisotropic total variation, summed over channels:
/// `Σ |V[i+1,j] − V[i,j]| + |V[i,j+1] − V[i,j]|` with out-of-range terms dropped.
pub fn total_variation(v: &Grid) -> f64 {
    let d = v.dims();
    let mut tv = 0.0;
    for y in 0..d.height {
        for x in 0..d.width {
            for c in 0..d.channels {
                let here = v.get(x, y, c);
                if y + 1 < d.height {
                    tv += (v.get(x, y + 1, c) - here).abs();
                }
                if x + 1 < d.width {
                    tv += (v.get(x + 1, y, c) - here).abs();
                }
            }
        }
    }
    tv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// `S ← (1 − α)·S − β·V`.
    #[default]
    Momentum,
    /// `S ← (1 − α)·S + β·TV(V)`: the scalar TV is broadcast to every pixel.
    Literal,
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "momentum" => Ok(UpdateRule::Momentum),
            "literal" => Ok(UpdateRule::Literal),
            _ => Err(Error::domain(format!("unknown update rule {s:?} (momentum | literal)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub target_prob: f64,
    pub update_rule: UpdateRule,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 0.5,
            alpha: 0.1,
            beta: 0.01,
            max_iters: 500,
            target_prob: 0.9,
            update_rule: UpdateRule::Momentum,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if ((self.lambda1 + self.lambda2) - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "lambda1 + lambda2 must equal 1, got {} + {}",
                self.lambda1, self.lambda2
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda1) {
            return Err(Error::domain("lambda1 must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::domain("alpha must lie in [0, 1]"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::domain("beta must be a non-negative number"));
        }
        if !(self.target_prob > 0.0 && self.target_prob <= 1.0) {
            return Err(Error::domain("target probability must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub target_prob: f64,
    /// Total variation of `S` at this iteration.
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionState {
    pub sample: ImageBuffer,
    pub momentum: Grid,
    pub iter: usize,
    /// One record per evaluated state, starting with the all-zero image.
    pub history: Vec<IterationRecord>,
}

impl ReconstructionState {
    pub fn initial(cls: &dyn Classifier) -> Result<Self> {
        let d = cls.input_dims();
        Ok(Self {
            sample: ImageBuffer::zeros(d.width, d.height, d.channels)?,
            momentum: Grid::zeros(d),
            iter: 0,
            history: Vec::new(),
        })
    }

    pub fn loss_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.loss).collect()
    }

    pub fn final_prob(&self) -> Option<f64> {
        self.history.last().map(|r| r.target_prob)
    }

    /// `iteration,loss,target_prob,tv` rows.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.history {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::domain(format!("csv: {e}"))
}

/// Runs the inversion loop until `target_prob` is reached or `max_iters` steps were taken.
pub fn reconstruct(
    cls: &dyn Classifier,
    target: usize,
    cfg: &InversionConfig,
) -> Result<(ImageBuffer, ReconstructionState)> {
    cfg.validate()?;
    if target >= cls.num_classes() {
        return Err(Error::domain(format!(
            "class index {target} out of range for {} classes",
            cls.num_classes()
        )));
    }
    let mut state = ReconstructionState::initial(cls)?;
    loop {
        let probs = cls.forward(&state.sample)?;
        let p = probs[target];
        state.history.push(IterationRecord {
            iteration: state.iter,
            loss: inversion_loss(&probs, target)?,
            target_prob: p,
            tv: total_variation(&state.sample.to_grid()),
        });
        if p >= cfg.target_prob || state.iter >= cfg.max_iters {
            break;
        }
        let grad = cls.input_gradient(&state.sample, target)?;
        if !grad.is_finite() {
            return Err(Error::NonFinite {
                iter: state.iter,
                state: Box::new(state),
            });
        }
        state.momentum = momentum_update(&state.momentum, &grad, cfg)?;
        state.sample = step_sample(&state.sample, &state.momentum, cfg)?;
        state.iter += 1;
    }
    Ok((state.sample.clone(), state))
}

fn step_sample(s: &ImageBuffer, v: &Grid, cfg: &InversionConfig) -> Result<ImageBuffer> {
    let keep = 1.0 - cfg.alpha;
    let next = match cfg.update_rule {
        UpdateRule::Momentum => s.to_grid().zip_with(v, |s, v| keep * s - cfg.beta * v)?,
        UpdateRule::Literal => {
            let shift = cfg.beta * total_variation(v);
            s.to_grid().map(|s| keep * s + shift)
        }
    };
    ImageBuffer::from_grid(&next)
}
