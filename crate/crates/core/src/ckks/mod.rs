//! Leveled CKKS over the RNS ring in [`crate::ring`].

pub mod encoding;
pub mod keys;
pub mod ops;
pub mod params;
pub mod serialize;

use thiserror::Error;

use crate::ring::RingError;

pub use encoding::{decode, encode, encode_at_level, encode_constant, EncodedPlaintext, Encoder, PlaintextVector};
pub use keys::{keygen, EncryptionRandomness, EvaluationKey, PublicKey, SecretKey};
pub use ops::{
    decrypt, encrypt, he_add, he_add_plain, he_mul, he_mul_const, he_mul_plain, he_square, he_sub,
    linear_combination, max_abs_error, mod_switch, noise_norm, relin_digits, rescale, weighted_sum,
    Ciphertext, SCALE_TOLERANCE,
};
pub use params::{depth_budget, CkksParams, NoiseMode, Preset, PresetTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkksError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("vector of length {len} exceeds {slots} slots")]
    VectorTooLong { len: usize, slots: usize },
    #[error("invalid scale {0}")]
    InvalidScale(f64),
    #[error("encoded coefficients overflow the modulus")]
    EncodingOverflow,
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: f64, right: f64 },
    #[error("no level left to rescale")]
    NoLevelLeft,
    #[error("product scale exceeds the remaining modulus")]
    ScaleOverflow,
    #[error("plaintext at level {found}, encryption needs level {expected}")]
    PlaintextLevel { expected: usize, found: usize },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset config: {0}")]
    PresetConfig(String),
    #[error("serialization: {0}")]
    Serialization(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("level {0} out of range")]
    LevelOutOfRange(usize),
    #[error("linear combination needs at least one term")]
    EmptyCombination,
    #[error("key does not match parameters: {0}")]
    KeyMismatch(String),
}
