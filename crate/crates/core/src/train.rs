//! Plaintext mini-batch training for small models, used to compare a
//! polynomial surrogate against exact ReLU on the synthetic dataset.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::activation::PolyActivation;
use crate::model_io::{Dataset, ModelIoError};
use crate::nn::spec::same_geometry;
use crate::nn::{LayerParams, LayerSpec, Model, ModelSpec, NnError, Padding, Shape};
use crate::par::map_range;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("model must end in a single-unit dense layer (optionally followed by sigmoid)")]
    NotBinaryClassifier,
    #[error("dataset images are {found}, model expects {expected}")]
    InputShape { expected: Shape, found: Shape },
    #[error("training needs a non-empty dataset and positive epochs, batch size and learning rate")]
    InvalidConfig,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] ModelIoError),
}

/// What activation layers compute during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationMode {
    /// `max(0, x)` regardless of the named surrogate.
    ExactRelu,
    /// The surrogate polynomial each layer names.
    Surrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial Adam step size; decays along a cosine to zero.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 2e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: Model,
    /// Mean binary cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
}

/// A compact CNN for 32x32x3 tiles with every hidden activation bound to
/// `surrogate`. Its encrypted depth is 13.
///
/// Inputs are raw 8-bit values centred on zero (`x - 128`), which keeps
/// pre-activations in the hundreds, the range the published surrogate was
/// fitted on. On `[0, 1]` inputs it acts as a near-linear map.
pub fn small_cnn(surrogate: &str, p: PolyActivation) -> ModelSpec {
    let act = || LayerSpec::activation(surrogate);
    let mut spec = ModelSpec::new(
        [32, 32, 3],
        vec![
            LayerSpec::pool(2),
            LayerSpec::conv_same(6, 3),
            act(),
            LayerSpec::pool(2),
            LayerSpec::conv_same(8, 3),
            act(),
            LayerSpec::pool(2),
            LayerSpec::Dense { units: 16 },
            act(),
            LayerSpec::Dense { units: 1 },
            LayerSpec::Sigmoid,
        ],
    )
    .with_activation(surrogate, p);
    spec.preprocessing = crate::nn::Preprocessing {
        scale: vec![1.0; 3],
        offset: vec![-128.0; 3],
    };
    spec
}

/// A shallower CNN whose encrypted depth is 8, so it runs at the
/// `test-n4096-d8` preset: 4x4 pool, two 3x3 convolutions with activations,
/// and a single dense logit. Same input convention as [`small_cnn`].
pub fn compact_cnn(surrogate: &str, p: PolyActivation) -> ModelSpec {
    let act = || LayerSpec::activation(surrogate);
    let mut spec = ModelSpec::new(
        [32, 32, 3],
        vec![
            LayerSpec::pool(4),
            LayerSpec::conv_same(6, 3),
            act(),
            LayerSpec::conv_same(6, 3),
            act(),
            LayerSpec::Dense { units: 1 },
            LayerSpec::Sigmoid,
        ],
    )
    .with_activation(surrogate, p);
    spec.preprocessing = crate::nn::Preprocessing {
        scale: vec![1.0; 3],
        offset: vec![-128.0; 3],
    };
    spec
}

/// Per-layer evaluation plan derived from a spec.
struct Plan<'a> {
    spec: &'a ModelSpec,
    shapes: Vec<Shape>,
    mode: ActivationMode,
}

fn dims(s: Shape) -> (usize, usize, usize) {
    match s {
        Shape::Spatial { h, w, c } => (h, w, c),
        Shape::Flat(n) => (1, 1, n),
    }
}

impl<'a> Plan<'a> {
    fn new(spec: &'a ModelSpec, mode: ActivationMode) -> Result<Self, TrainError> {
        let mut shapes = vec![spec.input_shape()];
        shapes.extend(spec.shape_infer()?);
        let logit = match spec.layers.last() {
            Some(LayerSpec::Sigmoid) => spec.layers.len().checked_sub(2),
            Some(_) => Some(spec.layers.len() - 1),
            None => None,
        };
        match logit.map(|i| &spec.layers[i]) {
            Some(LayerSpec::Dense { units: 1 }) => Ok(Self { spec, shapes, mode }),
            _ => Err(TrainError::NotBinaryClassifier),
        }
    }

    fn activation(&self, layer: usize) -> Option<&PolyActivation> {
        match (&self.spec.layers[layer], self.mode) {
            (LayerSpec::Activation { surrogate }, ActivationMode::Surrogate) => self.spec.activations.get(surrogate),
            _ => None,
        }
    }

    /// Values entering each layer plus the final logit.
    fn forward(&self, params: &[LayerParams], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let (in_s, out_s) = (self.shapes[i], self.shapes[i + 1]);
            let out = match layer {
                LayerSpec::Conv2d {
                    kernel, stride, padding, ..
                } => {
                    let mut out = vec![0.0; out_s.len()];
                    conv_visit(in_s, out_s, *kernel, *stride, *padding, |o, xi, wi, f| {
                        if let Some(xi) = xi {
                            out[o] += input[xi] * params[i].weights[wi];
                        } else {
                            out[o] += params[i].bias[f];
                        }
                    });
                    out
                }
                LayerSpec::AvgPool2d { pool } => {
                    let mut out = vec![0.0; out_s.len()];
                    let inv = 1.0 / (pool[0] * pool[1]) as f64;
                    pool_visit(in_s, out_s, *pool, |o, xi| out[o] += input[xi] * inv);
                    out
                }
                LayerSpec::ZeroPad2d { rows, cols } => {
                    let mut out = vec![0.0; out_s.len()];
                    pad_visit(in_s, *rows, *cols, |xi, o| out[o] = input[xi]);
                    out
                }
                LayerSpec::Dense { units } => {
                    let w = &params[i].weights;
                    (0..*units)
                        .map(|u| params[i].bias[u] + input.iter().enumerate().map(|(k, v)| v * w[k * units + u]).sum::<f64>())
                        .collect()
                }
                LayerSpec::Activation { .. } => match self.activation(i) {
                    Some(p) => p.eval_slice(input),
                    None => input.iter().map(|v| v.max(0.0)).collect(),
                },
                // Trained on the logit.
                LayerSpec::Sigmoid => input.clone(),
            };
            acts.push(out);
        }
        acts
    }

    /// Backpropagates `d loss / d logit` through one sample.
    fn backward(&self, params: &[LayerParams], acts: &[Vec<f64>], dlogit: f64) -> Vec<LayerParams> {
        let mut grads: Vec<LayerParams> = params
            .iter()
            .map(|p| LayerParams {
                weights: vec![0.0; p.weights.len()],
                bias: vec![0.0; p.bias.len()],
            })
            .collect();
        let mut g = vec![dlogit];
        for i in (0..self.spec.layers.len()).rev() {
            let input = &acts[i];
            let (in_s, out_s) = (self.shapes[i], self.shapes[i + 1]);
            let mut gin = vec![0.0; in_s.len()];
            match &self.spec.layers[i] {
                LayerSpec::Conv2d {
                    kernel, stride, padding, ..
                } => {
                    let w = &params[i].weights;
                    let gp = &mut grads[i];
                    conv_visit(in_s, out_s, *kernel, *stride, *padding, |o, xi, wi, f| {
                        if let Some(xi) = xi {
                            gp.weights[wi] += g[o] * input[xi];
                            gin[xi] += g[o] * w[wi];
                        } else {
                            gp.bias[f] += g[o];
                        }
                    });
                }
                LayerSpec::AvgPool2d { pool } => {
                    let inv = 1.0 / (pool[0] * pool[1]) as f64;
                    pool_visit(in_s, out_s, *pool, |o, xi| gin[xi] += g[o] * inv);
                }
                LayerSpec::ZeroPad2d { rows, cols } => pad_visit(in_s, *rows, *cols, |xi, o| gin[xi] = g[o]),
                LayerSpec::Dense { units } => {
                    let w = &params[i].weights;
                    let gp = &mut grads[i];
                    for (k, &v) in input.iter().enumerate() {
                        let row = k * units;
                        for u in 0..*units {
                            gp.weights[row + u] += g[u] * v;
                            gin[k] += g[u] * w[row + u];
                        }
                    }
                    gp.bias.copy_from_slice(&g);
                }
                LayerSpec::Activation { .. } => match self.activation(i) {
                    Some(p) => {
                        let d = derivative(&p.coefficients);
                        for k in 0..gin.len() {
                            gin[k] = g[k] * horner(&d, input[k]);
                        }
                    }
                    None => {
                        for k in 0..gin.len() {
                            gin[k] = if input[k] > 0.0 { g[k] } else { 0.0 };
                        }
                    }
                },
                LayerSpec::Sigmoid => gin.copy_from_slice(&g),
            }
            g = gin;
        }
        grads
    }
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, v)| k as f64 * v).collect()
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Calls `f(out, Some(in), weight, filter)` for every multiply and
/// `f(out, None, _, filter)` once per output for the bias.
fn conv_visit(
    in_s: Shape,
    out_s: Shape,
    kernel: [usize; 2],
    stride: [usize; 2],
    padding: Padding,
    mut f: impl FnMut(usize, Option<usize>, usize, usize),
) {
    let (h, w, ic) = dims(in_s);
    let (oh, ow, oc) = dims(out_s);
    let [kh, kw] = kernel;
    let (top, left) = match padding {
        Padding::Same => (same_geometry(h, kh, stride[0]).1, same_geometry(w, kw, stride[1]).1),
        Padding::Valid => (0, 0),
    };
    for oi in 0..oh {
        for oj in 0..ow {
            for co in 0..oc {
                let o = (oi * ow + oj) * oc + co;
                f(o, None, 0, co);
                for ki in 0..kh {
                    let ii = (oi * stride[0] + ki) as isize - top as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for kj in 0..kw {
                        let jj = (oj * stride[1] + kj) as isize - left as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        let base = (ii as usize * w + jj as usize) * ic;
                        for ci in 0..ic {
                            f(o, Some(base + ci), ((ki * kw + kj) * ic + ci) * oc + co, co);
                        }
                    }
                }
            }
        }
    }
}

fn pool_visit(in_s: Shape, out_s: Shape, pool: [usize; 2], mut f: impl FnMut(usize, usize)) {
    let (_, w, c) = dims(in_s);
    let (oh, ow, _) = dims(out_s);
    for oi in 0..oh {
        for oj in 0..ow {
            for ch in 0..c {
                let o = (oi * ow + oj) * c + ch;
                for di in 0..pool[0] {
                    for dj in 0..pool[1] {
                        f(o, ((oi * pool[0] + di) * w + oj * pool[1] + dj) * c + ch);
                    }
                }
            }
        }
    }
}

fn pad_visit(in_s: Shape, rows: usize, cols: usize, mut f: impl FnMut(usize, usize)) {
    let (h, w, c) = dims(in_s);
    let pw = w + 2 * cols;
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                f((i * w + j) * c + ch, ((i + rows) * pw + j + cols) * c + ch);
            }
        }
    }
}

fn init_params(spec: &ModelSpec, rng: &mut ChaCha20Rng) -> Result<Vec<LayerParams>, TrainError> {
    let shapes = spec.parameter_shapes()?;
    Ok(shapes
        .iter()
        .map(|&(w, b)| {
            // Fan-in is the weight count per output unit.
            let fan_in = if b > 0 { w / b } else { 1 };
            let limit = (6.0 / fan_in.max(1) as f64).sqrt();
            LayerParams {
                weights: (0..w).map(|_| rng.random_range(-limit..limit)).collect(),
                bias: vec![0.0; b],
            }
        })
        .collect())
}

fn check_data(spec: &ModelSpec, data: &Dataset) -> Result<(), TrainError> {
    if data.shape() != spec.input_shape() {
        return Err(TrainError::InputShape {
            expected: spec.input_shape(),
            found: data.shape(),
        });
    }
    Ok(())
}

fn preprocessed(spec: &ModelSpec, data: &Dataset, i: usize) -> Vec<f64> {
    let mut x: Vec<f64> = data.image(i).iter().map(|&p| p as f64).collect();
    spec.preprocessing.apply(&mut x);
    x
}

fn bce(logit: f64, label: f64) -> f64 {
    // log(1 + e^z) - y z, computed stably.
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Adam on binary cross-entropy of the pre-sigmoid logit. Deterministic
/// for a given seed and thread count independent: per-sample gradients are
/// summed in sample order.
pub fn train(spec: &ModelSpec, mode: ActivationMode, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    if data.is_empty() || cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(TrainError::InvalidConfig);
    }
    check_data(spec, data)?;
    let plan = Plan::new(spec, mode)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(spec, &mut rng)?;
    let inputs: Vec<Vec<f64>> = (0..data.len()).map(|i| preprocessed(spec, data, i)).collect();

    let flat = |p: &[LayerParams]| -> Vec<f64> { p.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect() };
    let n_params = flat(&params).len();
    let (mut m1, mut m2) = (vec![0.0; n_params], vec![0.0; n_params]);
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let total_steps = (cfg.epochs * data.len().div_ceil(cfg.batch_size)) as f64;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample = map_range(batch.len(), |k| {
                let i = batch[k];
                let acts = plan.forward(&params, &inputs[i]);
                let z = acts.last().unwrap()[0];
                let y = data.labels[i] as f64;
                Ok::<_, TrainError>((bce(z, y), flat(&plan.backward(&params, &acts, sigmoid(z) - y))))
            })?;
            let mut grad = vec![0.0; n_params];
            for (loss, g) in &per_sample {
                loss_sum += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            step += 1;
            let scale = 1.0 / batch.len() as f64;
            let (c1, c2) = (1.0 - beta1.powi(step), 1.0 - beta2.powi(step));
            // Cosine decay to zero over the run.
            let lr = cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * (step - 1) as f64 / total_steps).cos());
            let mut k = 0;
            for layer in params.iter_mut() {
                for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                    let g = grad[k] * scale;
                    m1[k] = beta1 * m1[k] + (1.0 - beta1) * g;
                    m2[k] = beta2 * m2[k] + (1.0 - beta2) * g * g;
                    *v -= lr * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
                    k += 1;
                }
            }
        }
        epoch_loss.push(loss_sum / data.len() as f64);
    }
    Ok(TrainReport {
        model: Model::new(spec.clone(), params)?,
        epoch_loss,
    })
}

/// Pre-sigmoid logits for every sample.
pub fn logits(model: &Model, mode: ActivationMode, data: &Dataset) -> Result<Vec<f64>, TrainError> {
    check_data(&model.spec, data)?;
    let plan = Plan::new(&model.spec, mode)?;
    map_range(data.len(), |i| {
        Ok(plan.forward(&model.params, &preprocessed(&model.spec, data, i)).last().unwrap()[0])
    })
}

/// Fraction of samples whose logit sign matches the label.
pub fn accuracy(model: &Model, mode: ActivationMode, data: &Dataset) -> Result<f64, TrainError> {
    let z = logits(model, mode, data)?;
    if z.is_empty() {
        return Ok(0.0);
    }
    let hits = z.iter().zip(&data.labels).filter(|(z, &y)| (**z > 0.0) == (y == 1)).count();
    Ok(hits as f64 / z.len() as f64)
}
