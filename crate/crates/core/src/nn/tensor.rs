use super::spec::Shape;
use super::NnError;
use crate::ckks::{decode, decrypt, encode, encrypt, CkksParams, Ciphertext, EncryptionRandomness, PlaintextVector, PublicKey, SecretKey};

/// Real tensor of shape `(batch, h, w, c)` or `(batch, features)`, stored
/// batch-major with each sample in HWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPlain {
    pub batch: usize,
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl TensorPlain {
    pub fn new(batch: usize, shape: Shape, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != batch * shape.len() {
            return Err(NnError::DataLength {
                expected: batch * shape.len(),
                found: data.len(),
            });
        }
        Ok(Self { batch, shape, data })
    }

    pub fn zeros(batch: usize, shape: Shape) -> Self {
        Self {
            batch,
            shape,
            data: vec![0.0; batch * shape.len()],
        }
    }

    pub fn from_samples(shape: Shape, samples: &[Vec<f64>]) -> Result<Self, NnError> {
        let mut data = Vec::with_capacity(samples.len() * shape.len());
        for s in samples {
            if s.len() != shape.len() {
                return Err(NnError::DataLength {
                    expected: shape.len(),
                    found: s.len(),
                });
            }
            data.extend_from_slice(s);
        }
        Ok(Self {
            batch: samples.len(),
            shape,
            data,
        })
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let k = self.shape.len();
        &self.data[i * k..(i + 1) * k]
    }

    /// Position-major view: one vector of batch values per position.
    pub(crate) fn to_positions(&self) -> Vec<Vec<f64>> {
        let k = self.shape.len();
        (0..k)
            .map(|p| (0..self.batch).map(|b| self.data[b * k + p]).collect())
            .collect()
    }

    pub(crate) fn from_positions(batch: usize, shape: Shape, positions: &[Vec<f64>]) -> Self {
        let k = shape.len();
        let mut data = vec![0.0; batch * k];
        for (p, v) in positions.iter().enumerate() {
            for (b, x) in v.iter().enumerate() {
                data[b * k + p] = *x;
            }
        }
        Self { batch, shape, data }
    }
}

/// One ciphertext per tensor position; slot `i` of every ciphertext belongs
/// to sample `i` of the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEncrypted {
    pub batch: usize,
    pub shape: Shape,
    pub data: Vec<Ciphertext>,
}

impl TensorEncrypted {
    /// Common `(scale, level)` of the member ciphertexts, if they agree.
    pub fn ledger(&self) -> Option<(f64, usize)> {
        let first = self.data.first()?;
        self.data
            .iter()
            .all(|c| c.scale == first.scale && c.level() == first.level())
            .then_some((first.scale, first.level()))
    }

    pub fn level(&self) -> Option<usize> {
        self.data.first().map(|c| c.level())
    }
}

/// SplitMix64 finalizer over a seed and two stream indices.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ index.wrapping_mul(0xbf58_476d_1ce4_e5b9).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Encrypts a batch position by position at the default scale.
pub fn encrypt_tensor(params: &CkksParams, pk: &PublicKey, x: &TensorPlain, seed: u64) -> Result<TensorEncrypted, NnError> {
    if x.batch > params.slot_count() {
        return Err(NnError::BatchTooLarge {
            batch: x.batch,
            slots: params.slot_count(),
        });
    }
    let positions = x.to_positions();
    let data = crate::par::map_indexed(&positions, |p, values| {
        let m = encode(params, &PlaintextVector::from_real(values), params.scale())?;
        let r = EncryptionRandomness::sample(params, derive_seed(seed, 0, p as u64))?;
        Ok::<_, NnError>(encrypt(pk, &m, &r)?)
    })?;
    Ok(TensorEncrypted {
        batch: x.batch,
        shape: x.shape,
        data,
    })
}

pub fn decrypt_tensor(params: &CkksParams, sk: &SecretKey, x: &TensorEncrypted) -> Result<TensorPlain, NnError> {
    let positions = crate::par::map_indexed(&x.data, |_, ct| {
        let mut v = decode(params, &decrypt(sk, ct)?)?.real_parts();
        v.truncate(x.batch);
        Ok::<_, NnError>(v)
    })?;
    Ok(TensorPlain::from_positions(x.batch, x.shape, &positions))
}
