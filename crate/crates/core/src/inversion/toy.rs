//! A small convolutional classifier trained on synthetic shapes.
//!
//! Architecture: per-image standardization → `k×k` convolution (one kernel per
//! filter and channel, stride 1, valid padding) → ReLU → global average pool
//! → dense → softmax. Standardization makes the response contrast-invariant,
//! so faint patterns near the all-zero image already carry class evidence.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{conv2d_grid, conv_output_dims, Dims, Grid, ImageBuffer, Kernel};
use crate::inversion::classifier::{
    check_input, check_target, loss_logit_gradient, softmax, Classifier,
};

pub const SHAPE_CLASSES: [&str; 3] = ["square", "circle", "stripes"];

/// Seed of the reference classifier used by the end-to-end checks.
pub const DEFAULT_SEED: u64 = 1;

/// Smoothing term of the per-image standardization `(x − μ) / √(σ² + ε²)`.
pub const STANDARDIZE_EPS: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainConfig {
    pub size: usize,
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            size: 16,
            channels: 3,
            filters: 12,
            kernel: 3,
            epochs: 80,
            learning_rate: 0.3,
            batch_size: 8,
            train_per_class: 200,
            test_per_class: 100,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

/// Labeled synthetic images: filled squares, filled disks and line gratings
/// on a dark background, gray replicated across channels.
pub fn shape_dataset(
    size: usize,
    channels: usize,
    per_class: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(ImageBuffer, usize)>> {
    if size < 8 {
        return Err(Error::domain("shape images need at least 8x8 pixels"));
    }
    let mut out = Vec::with_capacity(per_class * SHAPE_CLASSES.len());
    for _ in 0..per_class {
        for class in 0..SHAPE_CLASSES.len() {
            out.push((draw_shape(size, channels, class, rng)?, class));
        }
    }
    Ok(out)
}

fn draw_shape(size: usize, channels: usize, class: usize, rng: &mut impl Rng) -> Result<ImageBuffer> {
    let mut bg: f64 = rng.gen_range(0.0..0.25);
    let mut fg: f64 = rng.gen_range(0.65..1.0);
    if rng.gen_bool(0.5) {
        std::mem::swap(&mut bg, &mut fg);
    }
    let s = size as f64;
    let inside: Box<dyn Fn(f64, f64) -> bool> = match class {
        0 => {
            let side = rng.gen_range(size / 3..=size * 2 / 3) as f64;
            let x0 = rng.gen_range(0.0..=(s - side));
            let y0 = rng.gen_range(0.0..=(s - side));
            Box::new(move |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side)
        }
        1 => {
            let r = rng.gen_range(s / 6.0..=s / 3.0);
            let cx = rng.gen_range(r..=(s - r));
            let cy = rng.gen_range(r..=(s - r));
            Box::new(move |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r)
        }
        _ => {
            let period = rng.gen_range(3..=4) as f64;
            let phase = rng.gen_range(0.0..period);
            let vertical = rng.gen_bool(0.5);
            Box::new(move |x, y| {
                let t = if vertical { x } else { y };
                ((t - 0.5 + phase) / period).fract() < 1.0 / period
            })
        }
    };
    let mut data = Vec::with_capacity(size * size * channels);
    for y in 0..size {
        for x in 0..size {
            let base = if inside(x as f64 + 0.5, y as f64 + 0.5) {
                fg
            } else {
                bg
            };
            let v = base + rng.gen_range(-0.04..0.04);
            for _ in 0..channels {
                data.push(v);
            }
        }
    }
    ImageBuffer::new(size, size, channels, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    pub(crate) dims: Dims,
    pub(crate) kernel: usize,
    pub(crate) filters: usize,
    pub(crate) classes: usize,
    /// `filters × channels` kernels, filter-major.
    pub(crate) conv: Vec<Kernel>,
    pub(crate) conv_bias: Vec<f64>,
    /// `classes × filters`.
    pub(crate) dense: Vec<f64>,
    pub(crate) dense_bias: Vec<f64>,
}

struct Activations {
    /// Standardized input, one plane per channel.
    planes: Vec<Grid>,
    /// `√(σ² + ε²)` of the raw input.
    spread: f64,
    /// Pre-activation feature map per filter.
    pre: Vec<Grid>,
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

struct Gradients {
    conv: Vec<Vec<f64>>,
    conv_bias: Vec<f64>,
    dense: Vec<f64>,
    dense_bias: Vec<f64>,
}

impl ToyClassifier {
    pub fn init(dims: Dims, filters: usize, kernel: usize, classes: usize, rng: &mut impl Rng) -> Result<Self> {
        conv_output_dims(dims, kernel, 1)?;
        if filters == 0 || classes < 2 {
            return Err(Error::domain("need at least one filter and two classes"));
        }
        let fan_in = (kernel * kernel * dims.channels) as f64;
        let conv_scale = (6.0 / fan_in).sqrt();
        let conv = (0..filters * dims.channels)
            .map(|_| {
                let w = (0..kernel * kernel)
                    .map(|_| rng.gen_range(-conv_scale..conv_scale))
                    .collect();
                Kernel::new(kernel, w)
            })
            .collect::<Result<Vec<_>>>()?;
        let dense_scale = (6.0 / filters as f64).sqrt();
        let dense = (0..classes * filters)
            .map(|_| rng.gen_range(-dense_scale..dense_scale))
            .collect();
        Ok(Self {
            dims,
            kernel,
            filters,
            classes,
            conv,
            conv_bias: vec![0.01; filters],
            dense,
            dense_bias: vec![0.0; classes],
        })
    }

    /// Trains on freshly generated shapes; everything derives from `cfg.seed`.
    pub fn train(cfg: &ToyTrainConfig) -> Result<(Self, TrainReport)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dims = Dims::new(cfg.size, cfg.size, cfg.channels);
        let mut model = Self::init(dims, cfg.filters, cfg.kernel, SHAPE_CLASSES.len(), &mut rng)?;
        let train = shape_dataset(cfg.size, cfg.channels, cfg.train_per_class, &mut rng)?;
        let test = shape_dataset(cfg.size, cfg.channels, cfg.test_per_class, &mut rng)?;

        let mut order: Vec<usize> = (0..train.len()).collect();
        let batch = cfg.batch_size.max(1);
        let mut final_loss = f64::NAN;
        for epoch in 0..cfg.epochs {
            // Linear decay to zero.
            let lr = cfg.learning_rate * (cfg.epochs - epoch) as f64 / cfg.epochs as f64;
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch) {
                let mut acc: Option<Gradients> = None;
                for &i in chunk {
                    let (img, label) = &train[i];
                    let (g, loss) = model.cross_entropy_gradients(img, *label);
                    epoch_loss += loss;
                    acc = Some(match acc {
                        None => g,
                        Some(a) => a.add(g),
                    });
                }
                if let Some(g) = acc {
                    model.sgd_step(&g, lr / chunk.len() as f64);
                }
            }
            final_loss = epoch_loss / train.len() as f64;
        }
        model.calibrate()?;
        let report = TrainReport {
            train_accuracy: model.accuracy(&train)?,
            test_accuracy: model.accuracy(&test)?,
            final_loss,
        };
        Ok((model, report))
    }

    /// Sets the dense bias so every constant image (all standardize to zero)
    /// scores exactly uniform.
    pub fn calibrate(&mut self) -> Result<()> {
        let zero = ImageBuffer::zeros(self.dims.width, self.dims.height, self.dims.channels)?;
        let pooled = self.activations(&zero).pooled;
        for k in 0..self.classes {
            let row = &self.dense[k * self.filters..(k + 1) * self.filters];
            self.dense_bias[k] = -row.iter().zip(&pooled).map(|(w, a)| w * a).sum::<f64>();
        }
        Ok(())
    }

    pub fn accuracy(&self, data: &[(ImageBuffer, usize)]) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0;
        for (img, label) in data {
            let p = self.forward(img)?;
            let best = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i);
            if best == Some(*label) {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    fn activations(&self, img: &ImageBuffer) -> Activations {
        let data = img.data();
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let spread = (var + STANDARDIZE_EPS * STANDARDIZE_EPS).sqrt();
        let plane_dims = Dims::new(self.dims.width, self.dims.height, 1);
        let planes: Vec<Grid> = (0..self.dims.channels)
            .map(|c| Grid::from_fn(plane_dims, |x, y, _| (img.get(x, y, c) - mean) / spread))
            .collect();

        let mut pre = Vec::with_capacity(self.filters);
        let mut pooled = Vec::with_capacity(self.filters);
        for f in 0..self.filters {
            let mut z: Option<Grid> = None;
            for (c, plane) in planes.iter().enumerate() {
                let k = &self.conv[f * self.dims.channels + c];
                let out = conv2d_grid(plane, k, 1).expect("input shape checked by caller");
                z = Some(match z {
                    None => out,
                    Some(acc) => acc.zip_with(&out, |a, b| a + b).expect("same shape"),
                });
            }
            let b = self.conv_bias[f];
            let z = z.expect("at least one channel").map(|v| v + b);
            let n = z.data().len() as f64;
            pooled.push(z.data().iter().map(|&v| v.max(0.0)).sum::<f64>() / n);
            pre.push(z);
        }
        let logits: Vec<f64> = (0..self.classes)
            .map(|k| {
                self.dense_bias[k]
                    + (0..self.filters)
                        .map(|f| self.dense[k * self.filters + f] * pooled[f])
                        .sum::<f64>()
            })
            .collect();
        Activations {
            planes,
            spread,
            pre,
            pooled,
            probs: softmax(&logits),
        }
    }

    /// Per-filter gradient on the pre-activation map given `∂/∂logits`.
    fn feature_gradients(&self, act: &Activations, dlogits: &[f64]) -> Vec<Vec<f64>> {
        (0..self.filters)
            .map(|f| {
                let dpool: f64 = (0..self.classes)
                    .map(|k| self.dense[k * self.filters + f] * dlogits[k])
                    .sum();
                let z = &act.pre[f];
                let n = z.data().len() as f64;
                z.data()
                    .iter()
                    .map(|&v| if v > 0.0 { dpool / n } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    fn cross_entropy_gradients(&self, img: &ImageBuffer, label: usize) -> (Gradients, f64) {
        let act = self.activations(img);
        let loss = -act.probs[label].max(1e-300).ln();
        let dlogits: Vec<f64> = act
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| p - if k == label { 1.0 } else { 0.0 })
            .collect();
        let mut dense = Vec::with_capacity(self.classes * self.filters);
        for &dz in &dlogits {
            dense.extend(act.pooled.iter().map(|&a| dz * a));
        }
        let dfeat = self.feature_gradients(&act, &dlogits);
        let out_dims = act.pre[0].dims();
        let k = self.kernel;
        let c = self.dims.channels;
        let mut conv = Vec::with_capacity(self.filters * c);
        let mut conv_bias = Vec::with_capacity(self.filters);
        for g in &dfeat {
            conv_bias.push(g.iter().sum());
            for plane in &act.planes {
                let mut dk = vec![0.0; k * k];
                for i in 0..out_dims.height {
                    for j in 0..out_dims.width {
                        let gij = g[i * out_dims.width + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for di in 0..k {
                            for dj in 0..k {
                                dk[di * k + dj] += gij * plane.get(j + dj, i + di, 0);
                            }
                        }
                    }
                }
                conv.push(dk);
            }
        }
        (
            Gradients {
                conv,
                conv_bias,
                dense,
                dense_bias: dlogits,
            },
            loss,
        )
    }

    fn sgd_step(&mut self, g: &Gradients, lr: f64) {
        for (kernel, dk) in self.conv.iter_mut().zip(&g.conv) {
            let w = kernel
                .weights()
                .iter()
                .zip(dk)
                .map(|(w, d)| w - lr * d)
                .collect();
            *kernel = Kernel::new(self.kernel, w).expect("same size");
        }
        for (b, d) in self.conv_bias.iter_mut().zip(&g.conv_bias) {
            *b -= lr * d;
        }
        for (w, d) in self.dense.iter_mut().zip(&g.dense) {
            *w -= lr * d;
        }
        for (b, d) in self.dense_bias.iter_mut().zip(&g.dense_bias) {
            *b -= lr * d;
        }
    }
}

impl Gradients {
    fn add(mut self, other: Gradients) -> Gradients {
        for (a, b) in self.conv.iter_mut().zip(other.conv) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in [
            (&mut self.conv_bias, other.conv_bias),
            (&mut self.dense, other.dense),
            (&mut self.dense_bias, other.dense_bias),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

impl Classifier for ToyClassifier {
    fn smooth_between(&self, a: &ImageBuffer, b: &ImageBuffer) -> bool {
        let (pa, pb) = (self.activations(a).pre, self.activations(b).pre);
        pa.iter()
            .zip(&pb)
            .all(|(za, zb)| za.data().iter().zip(zb.data()).all(|(u, v)| (*u > 0.0) == (*v > 0.0)))
    }

    fn input_dims(&self) -> Dims {
        self.dims
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn forward(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
        check_input(self.dims, img)?;
        Ok(self.activations(img).probs)
    }

    fn input_gradient(&self, img: &ImageBuffer, target: usize) -> Result<Grid> {
        check_input(self.dims, img)?;
        check_target(target, self.classes)?;
        let act = self.activations(img);
        let dlogits = loss_logit_gradient(&act.probs, target);
        let dfeat = self.feature_gradients(&act, &dlogits);
        let out_dims = act.pre[0].dims();
        let k = self.kernel;
        let c = self.dims.channels;
        // Gradient with respect to the standardized input `u`.
        let mut du = Grid::zeros(self.dims);
        for (f, g) in dfeat.iter().enumerate() {
            for i in 0..out_dims.height {
                for j in 0..out_dims.width {
                    let gij = g[i * out_dims.width + j];
                    if gij == 0.0 {
                        continue;
                    }
                    for ch in 0..c {
                        let kern = &self.conv[f * c + ch];
                        for di in 0..k {
                            for dj in 0..k {
                                let idx = self.dims.index(j + dj, i + di, ch);
                                du.data_mut()[idx] += gij * kern.at(di, dj);
                            }
                        }
                    }
                }
            }
        }
        // u = (x − μ)/s with s = √(σ² + ε²): ∂/∂x = (du − mean(du) − u·mean(du·u)) / s.
        let u = |idx: usize| act.planes[idx % c].data()[idx / c];
        let n = du.data().len() as f64;
        let mean_du = du.data().iter().sum::<f64>() / n;
        let mean_du_u = du.data().iter().enumerate().map(|(i, g)| g * u(i)).sum::<f64>() / n;
        let mut grad = du;
        for (i, g) in grad.data_mut().iter_mut().enumerate() {
            *g = (*g - mean_du - u(i) * mean_du_u) / act.spread;
        }
        Ok(grad)
    }
}
