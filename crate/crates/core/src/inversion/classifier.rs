use crate::error::{Error, Result};
use crate::imagecore::{Dims, Grid, ImageBuffer};

/// A differentiable image classifier as seen by the inversion loop.
///
/// Implementations must be safe for concurrent read-only use.
pub trait Classifier: Send + Sync {
    /// Shape of the images the classifier is evaluated on.
    fn input_dims(&self) -> Dims;

    fn num_classes(&self) -> usize;

    /// Class probabilities (a point on the simplex).
    fn forward(&self, img: &ImageBuffer) -> Result<Vec<f64>>;

    /// Gradient of `1 − p[target]` with respect to every pixel sample.
    fn input_gradient(&self, img: &ImageBuffer, target: usize) -> Result<Grid>;

    /// Whether the loss is smooth between `a` and `b`. Piecewise-linear models
    /// report `false` when an activation boundary separates the two inputs.
    fn smooth_between(&self, _a: &ImageBuffer, _b: &ImageBuffer) -> bool {
        true
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `∂(1 − p_t)/∂z_k = −p_t (δ_tk − p_k)`.
pub(crate) fn loss_logit_gradient(probs: &[f64], target: usize) -> Vec<f64> {
    let pt = probs[target];
    probs
        .iter()
        .enumerate()
        .map(|(k, &pk)| -pt * (if k == target { 1.0 } else { 0.0 } - pk))
        .collect()
}

pub(crate) fn check_input(dims: Dims, img: &ImageBuffer) -> Result<()> {
    let d = img.dims();
    if d.channels != dims.channels || d.width != dims.width || d.height != dims.height {
        return Err(Error::domain(format!(
            "classifier expects {}x{}x{} input, got {}x{}x{}",
            dims.width, dims.height, dims.channels, d.width, d.height, d.channels
        )));
    }
    Ok(())
}

pub(crate) fn check_target(target: usize, classes: usize) -> Result<()> {
    if target >= classes {
        return Err(Error::domain(format!(
            "class index {target} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// `softmax(W·x + b)` over flattened pixels; its input gradient has a closed form.
#[derive(Debug, Clone)]
pub struct LinearSoftmax {
    dims: Dims,
    /// `classes × dims.len()`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearSoftmax {
    pub fn new(dims: Dims, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if bias.is_empty() || weights.len() != bias.len() * dims.len() {
            return Err(Error::domain("weight matrix does not match classes × pixels"));
        }
        Ok(Self {
            dims,
            weights,
            bias,
        })
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dims.len();
        self.bias
            .iter()
            .enumerate()
            .map(|(k, &b)| {
                let row = &self.weights[k * d..(k + 1) * d];
                b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

impl Classifier for LinearSoftmax {
    fn input_dims(&self) -> Dims {
        self.dims
    }

    fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn forward(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
        check_input(self.dims, img)?;
        Ok(softmax(&self.logits(img.data())))
    }

    fn input_gradient(&self, img: &ImageBuffer, target: usize) -> Result<Grid> {
        check_input(self.dims, img)?;
        check_target(target, self.num_classes())?;
        let probs = softmax(&self.logits(img.data()));
        let dz = loss_logit_gradient(&probs, target);
        let d = self.dims.len();
        let mut grad = vec![0.0; d];
        for (k, &g) in dz.iter().enumerate() {
            for (acc, w) in grad.iter_mut().zip(&self.weights[k * d..(k + 1) * d]) {
                *acc += g * w;
            }
        }
        Grid::new(self.dims, grad)
    }
}
