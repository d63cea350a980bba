//! HE-compatible CNN layers over plaintext and slot-packed ciphertext tensors.

mod kernels;
pub mod spec;
pub mod tensor;

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::activation::ActivationError;
use crate::ckks::{CkksError, CkksParams, EvaluationKey, PublicKey};
use kernels::{Backend, EncryptedBackend, PlainBackend};
pub use spec::{LayerSpec, ModelSpec, Padding, Preprocessing, Shape};
pub use tensor::{decrypt_tensor, derive_seed, encrypt_tensor, TensorEncrypted, TensorPlain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("layer {layer}: unknown surrogate `{name}`")]
    UnknownSurrogate { layer: usize, name: String },
    #[error("layer {layer}: expected {expected} parameters ({what}), found {found}")]
    WeightShape {
        layer: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("input shape {found} does not match model input {expected}")]
    InputShape { expected: Shape, found: Shape },
    #[error("expected {expected} values, found {found}")]
    DataLength { expected: usize, found: usize },
    #[error("layer {layer}: depth exhausted, needs {needed} levels but {available} remain")]
    DepthExhausted { layer: usize, needed: usize, available: usize },
    #[error("batch of {batch} exceeds {slots} slots")]
    BatchTooLarge { batch: usize, slots: usize },
    #[error("layer {layer}: sigmoid cannot be evaluated under encryption")]
    SigmoidUnderEncryption { layer: usize },
    #[error("ciphertexts in the input tensor disagree on scale or level")]
    LedgerMismatch,
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error(transparent)]
    Activation(#[from] ActivationError),
}

/// Weights and bias of one layer; empty for parameterless layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A model specification with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Vec<LayerParams>,
}

impl Model {
    pub fn new(spec: ModelSpec, params: Vec<LayerParams>) -> Result<Self, NnError> {
        let shapes = spec.parameter_shapes()?;
        if params.len() != shapes.len() {
            return Err(NnError::InvalidLayer {
                layer: params.len().min(shapes.len()),
                reason: format!("{} parameter groups for {} layers", params.len(), shapes.len()),
            });
        }
        for (i, (p, (w, b))) in params.iter().zip(&shapes).enumerate() {
            if p.weights.len() != *w {
                return Err(NnError::WeightShape {
                    layer: i,
                    what: "weights",
                    expected: *w,
                    found: p.weights.len(),
                });
            }
            if p.bias.len() != *b {
                return Err(NnError::WeightShape {
                    layer: i,
                    what: "bias",
                    expected: *b,
                    found: p.bias.len(),
                });
            }
        }
        Ok(Self { spec, params })
    }

    /// Model whose parameters are drawn by `f(layer, index)`; handy for tests.
    pub fn with_generator(spec: ModelSpec, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, NnError> {
        let params = spec
            .parameter_shapes()?
            .iter()
            .enumerate()
            .map(|(layer, &(w, b))| LayerParams {
                weights: (0..w).map(|i| f(layer, i)).collect(),
                bias: (0..b).map(|i| f(layer, w + i)).collect(),
            })
            .collect();
        Self::new(spec, params)
    }

    /// Index of a trailing sigmoid layer, if any.
    pub fn sigmoid_index(&self) -> Option<usize> {
        match self.spec.layers.last() {
            Some(LayerSpec::Sigmoid) => Some(self.spec.layers.len() - 1),
            _ => None,
        }
    }
}

/// Keys and settings for running a model over ciphertexts.
pub struct EncryptedEvaluator<'a> {
    pub params: &'a CkksParams,
    pub pk: &'a PublicKey,
    pub evk: &'a EvaluationKey,
    /// Seeds the fresh encryptions of zero used by padding layers.
    pub seed: u64,
}

fn run<B: Backend>(
    model: &Model,
    backend_for: impl Fn(usize) -> B,
    mut x: Vec<B::Elem>,
    stop: usize,
    mut timings: Option<&mut Vec<Duration>>,
) -> Result<(Vec<B::Elem>, Shape), NnError> {
    let shapes = model.spec.shape_infer()?;
    let mut shape = model.spec.input_shape();
    for (i, layer) in model.spec.layers.iter().enumerate().take(stop) {
        let started = Instant::now();
        let b = backend_for(i);
        let p = &model.params[i];
        let out_shape = shapes[i];
        x = match layer {
            LayerSpec::Conv2d {
                kernel, stride, padding, ..
            } => kernels::conv2d(&b, &x, shape, &p.weights, &p.bias, *kernel, *stride, *padding, out_shape)?,
            LayerSpec::AvgPool2d { pool } => kernels::avg_pool2d(&b, &x, shape, *pool, out_shape)?,
            LayerSpec::ZeroPad2d { rows, cols } => kernels::zero_pad2d(&b, &x, shape, *rows, *cols)?,
            LayerSpec::Dense { .. } => kernels::dense(&b, &x, &p.weights, &p.bias)?,
            LayerSpec::Activation { surrogate } => kernels::activation(&b, &x, model.spec.surrogate(i, surrogate)?)?,
            LayerSpec::Sigmoid => kernels::sigmoid_layer(&b, &x)?,
        };
        shape = out_shape;
        if let Some(t) = timings.as_deref_mut() {
            t.push(started.elapsed());
        }
    }
    Ok((x, shape))
}

fn check_input(model: &Model, shape: Shape) -> Result<(), NnError> {
    let expected = model.spec.input_shape();
    if shape != expected {
        return Err(NnError::InputShape { expected, found: shape });
    }
    Ok(())
}

fn plain(model: &Model, x: &TensorPlain, stop: usize, timings: Option<&mut Vec<Duration>>) -> Result<TensorPlain, NnError> {
    check_input(model, x.shape)?;
    let (out, shape) = run(model, |_| PlainBackend, x.to_positions(), stop, timings)?;
    Ok(TensorPlain::from_positions(x.batch, shape, &out))
}

/// Runs every layer, including a final sigmoid.
pub fn forward_plain(model: &Model, x: &TensorPlain) -> Result<TensorPlain, NnError> {
    plain(model, x, model.spec.layers.len(), None)
}

/// Runs every layer except a final sigmoid.
pub fn forward_plain_logits(model: &Model, x: &TensorPlain) -> Result<TensorPlain, NnError> {
    plain(model, x, model.sigmoid_index().unwrap_or(model.spec.layers.len()), None)
}

/// [`forward_plain_logits`] with per-layer wall-clock timings.
pub fn forward_plain_timed(model: &Model, x: &TensorPlain) -> Result<(TensorPlain, Vec<Duration>), NnError> {
    let mut t = Vec::new();
    let out = plain(model, x, model.sigmoid_index().unwrap_or(model.spec.layers.len()), Some(&mut t))?;
    Ok((out, t))
}

/// Checks that a ciphertext tensor at `level` can run every layer before a
/// final sigmoid, reporting the first layer that would run out of levels.
pub fn check_depth(model: &Model, level: usize) -> Result<(), NnError> {
    let mut available = level;
    let stop = model.sigmoid_index().unwrap_or(model.spec.layers.len());
    for (layer, needed) in model.spec.layer_depths()?.into_iter().enumerate().take(stop) {
        if needed > available {
            return Err(NnError::DepthExhausted {
                layer,
                needed,
                available,
            });
        }
        available -= needed;
    }
    Ok(())
}

fn encrypted(
    model: &Model,
    ev: &EncryptedEvaluator<'_>,
    x: &TensorEncrypted,
    timings: Option<&mut Vec<Duration>>,
) -> Result<TensorEncrypted, NnError> {
    check_input(model, x.shape)?;
    let (_, level) = x.ledger().ok_or(NnError::LedgerMismatch)?;
    check_depth(model, level)?;
    let stop = model.sigmoid_index().unwrap_or(model.spec.layers.len());
    let backend_for = |layer| EncryptedBackend {
        params: ev.params,
        pk: ev.pk,
        evk: ev.evk,
        seed: ev.seed,
        layer,
    };
    let (out, shape) = run(model, backend_for, x.data.clone(), stop, timings)?;
    Ok(TensorEncrypted {
        batch: x.batch,
        shape,
        data: out,
    })
}

/// Runs every layer before a final sigmoid over ciphertexts; the result holds
/// encrypted logits.
pub fn forward_encrypted(model: &Model, ev: &EncryptedEvaluator<'_>, x: &TensorEncrypted) -> Result<TensorEncrypted, NnError> {
    encrypted(model, ev, x, None)
}

/// [`forward_encrypted`] with per-layer wall-clock timings.
pub fn forward_encrypted_timed(
    model: &Model,
    ev: &EncryptedEvaluator<'_>,
    x: &TensorEncrypted,
) -> Result<(TensorEncrypted, Vec<Duration>), NnError> {
    let mut t = Vec::new();
    let out = encrypted(model, ev, x, Some(&mut t))?;
    Ok((out, t))
}
