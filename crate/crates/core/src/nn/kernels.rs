//! Layer kernels shared by the plaintext and ciphertext backends.
//!
//! Tensors are position-major: one element per `(h, w, c)` position in HWC
//! order. Every output position is an independent affine combination of
//! input positions, computed in parallel.

use super::spec::{same_geometry, Padding, Shape};
use super::NnError;
use crate::activation::{sigmoid, PolyActivation};
use crate::ckks::{linear_combination, mod_switch, encode, encrypt, CkksParams, Ciphertext, EncryptionRandomness, EvaluationKey, PlaintextVector, PublicKey};
use crate::par::map_range;

use super::tensor::derive_seed;

pub(crate) trait Backend: Sync {
    type Elem: Clone + Send + Sync;

    /// `sum w_i x_i + bias`; one level under encryption.
    fn affine(&self, terms: &[(&Self::Elem, f64)], bias: f64) -> Result<Self::Elem, NnError>;
    /// A zero shaped like `like`; `tag` identifies the position for seeding.
    fn zero(&self, like: &Self::Elem, tag: u64) -> Result<Self::Elem, NnError>;
    fn activate(&self, p: &PolyActivation, x: &Self::Elem) -> Result<Self::Elem, NnError>;
    fn sigmoid(&self, x: &Self::Elem) -> Result<Self::Elem, NnError>;
}

/// Batch values per position.
pub(crate) struct PlainBackend;

impl Backend for PlainBackend {
    type Elem = Vec<f64>;

    fn affine(&self, terms: &[(&Vec<f64>, f64)], bias: f64) -> Result<Vec<f64>, NnError> {
        let batch = terms.first().map_or(0, |(x, _)| x.len());
        let mut out = vec![bias; batch];
        for (x, w) in terms {
            for (o, v) in out.iter_mut().zip(x.iter()) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    fn zero(&self, like: &Vec<f64>, _tag: u64) -> Result<Vec<f64>, NnError> {
        Ok(vec![0.0; like.len()])
    }

    fn activate(&self, p: &PolyActivation, x: &Vec<f64>) -> Result<Vec<f64>, NnError> {
        Ok(p.eval_slice(x))
    }

    fn sigmoid(&self, x: &Vec<f64>) -> Result<Vec<f64>, NnError> {
        Ok(x.iter().map(|&v| sigmoid(v)).collect())
    }
}

pub(crate) struct EncryptedBackend<'a> {
    pub params: &'a CkksParams,
    pub pk: &'a PublicKey,
    pub evk: &'a EvaluationKey,
    pub seed: u64,
    pub layer: usize,
}

impl Backend for EncryptedBackend<'_> {
    type Elem = Ciphertext;

    fn affine(&self, terms: &[(&Ciphertext, f64)], bias: f64) -> Result<Ciphertext, NnError> {
        Ok(linear_combination(self.params, terms, bias)?)
    }

    fn zero(&self, like: &Ciphertext, tag: u64) -> Result<Ciphertext, NnError> {
        let m = encode(self.params, &PlaintextVector::new(vec![]), like.scale)?;
        let r = EncryptionRandomness::sample(self.params, derive_seed(self.seed, 1 + self.layer as u64, tag))?;
        Ok(mod_switch(&encrypt(self.pk, &m, &r)?, like.level())?)
    }

    fn activate(&self, p: &PolyActivation, x: &Ciphertext) -> Result<Ciphertext, NnError> {
        Ok(p.eval_encrypted(self.params, x, self.evk)?)
    }

    fn sigmoid(&self, _x: &Ciphertext) -> Result<Ciphertext, NnError> {
        Err(NnError::SigmoidUnderEncryption { layer: self.layer })
    }
}

fn dims(shape: Shape) -> (usize, usize, usize) {
    match shape {
        Shape::Spatial { h, w, c } => (h, w, c),
        Shape::Flat(n) => (1, 1, n),
    }
}

/// Cross-correlation with weights laid out `(kh, kw, in_c, out_c)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d<B: Backend>(
    backend: &B,
    x: &[B::Elem],
    in_shape: Shape,
    weights: &[f64],
    bias: &[f64],
    kernel: [usize; 2],
    stride: [usize; 2],
    padding: Padding,
    out_shape: Shape,
) -> Result<Vec<B::Elem>, NnError> {
    let (h, w, ic) = dims(in_shape);
    let (oh, ow, oc) = dims(out_shape);
    let [kh, kw] = kernel;
    let (top, left) = match padding {
        Padding::Same => (same_geometry(h, kh, stride[0]).1, same_geometry(w, kw, stride[1]).1),
        Padding::Valid => (0, 0),
    };
    map_range(oh * ow * oc, |pos| {
        let f = pos % oc;
        let oj = (pos / oc) % ow;
        let oi = pos / (oc * ow);
        let mut terms = Vec::with_capacity(kh * kw * ic);
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
                    let wt = weights[((ki * kw + kj) * ic + ci) * oc + f];
                    terms.push((&x[base + ci], wt));
                }
            }
        }
        backend.affine(&terms, bias[f])
    })
}

pub(crate) fn avg_pool2d<B: Backend>(
    backend: &B,
    x: &[B::Elem],
    in_shape: Shape,
    pool: [usize; 2],
    out_shape: Shape,
) -> Result<Vec<B::Elem>, NnError> {
    let (_, w, c) = dims(in_shape);
    let (oh, ow, _) = dims(out_shape);
    let [ph, pw] = pool;
    let inv = 1.0 / (ph * pw) as f64;
    map_range(oh * ow * c, |pos| {
        let ch = pos % c;
        let oj = (pos / c) % ow;
        let oi = pos / (c * ow);
        let mut terms = Vec::with_capacity(ph * pw);
        for di in 0..ph {
            for dj in 0..pw {
                let ii = oi * ph + di;
                let jj = oj * pw + dj;
                terms.push((&x[(ii * w + jj) * c + ch], inv));
            }
        }
        backend.affine(&terms, 0.0)
    })
}

pub(crate) fn zero_pad2d<B: Backend>(
    backend: &B,
    x: &[B::Elem],
    in_shape: Shape,
    rows: usize,
    cols: usize,
) -> Result<Vec<B::Elem>, NnError> {
    let (h, w, c) = dims(in_shape);
    let (oh, ow) = (h + 2 * rows, w + 2 * cols);
    let Some(like) = x.first() else {
        return Ok(Vec::new());
    };
    map_range(oh * ow * c, |pos| {
        let ch = pos % c;
        let j = (pos / c) % ow;
        let i = pos / (c * ow);
        if i < rows || i >= rows + h || j < cols || j >= cols + w {
            backend.zero(like, pos as u64)
        } else {
            Ok(x[((i - rows) * w + (j - cols)) * c + ch].clone())
        }
    })
}

/// Affine map with weights laid out `(in, out)` over the HWC-flattened input.
pub(crate) fn dense<B: Backend>(backend: &B, x: &[B::Elem], weights: &[f64], bias: &[f64]) -> Result<Vec<B::Elem>, NnError> {
    let units = bias.len();
    map_range(units, |j| {
        let terms: Vec<(&B::Elem, f64)> = x.iter().enumerate().map(|(i, v)| (v, weights[i * units + j])).collect();
        backend.affine(&terms, bias[j])
    })
}

pub(crate) fn activation<B: Backend>(backend: &B, x: &[B::Elem], p: &PolyActivation) -> Result<Vec<B::Elem>, NnError> {
    map_range(x.len(), |i| backend.activate(p, &x[i]))
}

pub(crate) fn sigmoid_layer<B: Backend>(backend: &B, x: &[B::Elem]) -> Result<Vec<B::Elem>, NnError> {
    map_range(x.len(), |i| backend.sigmoid(&x[i]))
}
