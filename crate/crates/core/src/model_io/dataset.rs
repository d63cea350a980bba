//! Synthetic overhead-imagery dataset and its raw on-disk format.
//!
//! ```text
//! magic    "HEDS"
//! version  u16
//! reserved u16
//! count    u32
//! h, w, c  u32 each
//! labels   count bytes (0 or 1)
//! pixels   count * h * w * c bytes, each image in HWC order
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::ModelIoError;
use crate::nn::{derive_seed, Preprocessing, Shape, TensorPlain};

pub const DATASET_MAGIC: &[u8; 4] = b"HEDS";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 4 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Positives carry a bright car-like rectangle on the textured ground
    /// that negatives show alone.
    #[default]
    BlobOnTexture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub samples: usize,
    pub seed: u64,
    pub kind: GeneratorKind,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            channels: 3,
            samples: 2000,
            seed: 0,
            kind: GeneratorKind::BlobOnTexture,
        }
    }
}

impl SyntheticSpec {
    pub fn with_samples(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            ..Self::default()
        }
    }
}

/// Labeled 8-bit images, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub labels: Vec<u8>,
    pub pixels: Vec<u8>,
}

impl Dataset {
    pub fn new(height: usize, width: usize, channels: usize, labels: Vec<u8>, pixels: Vec<u8>) -> Result<Self, ModelIoError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ModelIoError::Dataset("image dimensions must be positive".into()));
        }
        if pixels.len() != labels.len() * height * width * channels {
            return Err(ModelIoError::Dataset(format!(
                "{} labels need {} pixel bytes, found {}",
                labels.len(),
                labels.len() * height * width * channels,
                pixels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(ModelIoError::Dataset("labels must be 0 or 1".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            labels,
            pixels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> Shape {
        Shape::spatial(self.height, self.width, self.channels)
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let k = self.shape().len();
        &self.pixels[i * k..(i + 1) * k]
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.len() as f64
    }

    /// Samples `range` as a preprocessed batch.
    pub fn to_tensor(&self, range: std::ops::Range<usize>, pre: &Preprocessing) -> Result<TensorPlain, ModelIoError> {
        if range.end > self.len() || range.start > range.end {
            return Err(ModelIoError::Dataset(format!("range {range:?} outside {} samples", self.len())));
        }
        let k = self.shape().len();
        let mut data: Vec<f64> = self.pixels[range.start * k..range.end * k].iter().map(|&p| p as f64).collect();
        for image in data.chunks_exact_mut(k) {
            pre.apply(image);
        }
        Ok(TensorPlain::new(range.len(), self.shape(), data)?)
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let k = self.shape().len();
        let part = |labels: &[u8], pixels: &[u8]| Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            labels: labels.to_vec(),
            pixels: pixels.to_vec(),
        };
        (
            part(&self.labels[..n], &self.pixels[..n * k]),
            part(&self.labels[n..], &self.pixels[n * k..]),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.labels.len() + self.pixels.len());
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        for v in [self.len(), self.height, self.width, self.channels] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.labels);
        buf.extend_from_slice(&self.pixels);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelIoError> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != DATASET_MAGIC {
            return Err(ModelIoError::Format("not a dataset file".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != DATASET_VERSION {
            return Err(ModelIoError::VersionMismatch {
                what: "dataset",
                found: version as u32,
                expected: DATASET_VERSION as u32,
            });
        }
        let field = |k: usize| u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().unwrap()) as usize;
        let (count, h, w, c) = (field(0), field(1), field(2), field(3));
        let body = &bytes[HEADER_LEN..];
        let need = count as u128 * (1 + h as u128 * w as u128 * c as u128);
        if body.len() as u128 != need {
            return Err(ModelIoError::Dataset(format!("dataset body holds {} bytes, header implies {need}", body.len())));
        }
        let (labels, pixels) = body.split_at(count);
        Self::new(h, w, c, labels.to_vec(), pixels.to_vec())
    }
}

/// Generates a dataset with exactly `samples / 2` positives in shuffled order.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset, ModelIoError> {
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    if h < 8 || w < 8 || c == 0 {
        return Err(ModelIoError::Dataset(format!("images must be at least 8x8 with one channel, got {h}x{w}x{c}")));
    }
    let mut labels: Vec<u8> = (0..spec.samples).map(|i| u8::from(i < spec.samples / 2)).collect();
    labels.shuffle(&mut ChaCha20Rng::seed_from_u64(derive_seed(spec.seed, 0, 0)));

    let k = h * w * c;
    let mut pixels = vec![0u8; spec.samples * k];
    for (i, (image, &label)) in pixels.chunks_exact_mut(k).zip(&labels).enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(spec.seed, 1, i as u64));
        match spec.kind {
            GeneratorKind::BlobOnTexture => blob_on_texture(image, h, w, c, label == 1, &mut rng),
        }
    }
    Dataset::new(h, w, c, labels, pixels)
}

fn blob_on_texture(image: &mut [u8], h: usize, w: usize, c: usize, vehicle: bool, rng: &mut ChaCha20Rng) {
    let base: f64 = rng.random_range(82.0..98.0);
    let tint: Vec<f64> = (0..c).map(|_| rng.random_range(-8.0..8.0)).collect();
    // Two low-frequency ripples give the ground some structure.
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(4.0..12.0),
                rng.random_range(0.05..0.35),
                rng.random_range(0.05..0.35),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let mut field = vec![0.0f64; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let ground: f64 = waves.iter().map(|&(a, fy, fx, ph)| a * (fy * y as f64 + fx * x as f64 + ph).sin()).sum();
            for ch in 0..c {
                field[(y * w + x) * c + ch] = base + tint[ch] + ground + rng.random_range(-20.0..20.0);
            }
        }
    }

    if vehicle {
        let max_long = (h.min(w) - 2).min(18);
        let long = rng.random_range(max_long.min(12)..=max_long);
        let short = rng.random_range(max_long.min(6)..=max_long.min(10)).min(long);
        let (bh, bw) = if rng.random_bool(0.5) { (long, short) } else { (short, long) };
        let top = rng.random_range(0..=h - bh);
        let left = rng.random_range(0..=w - bw);
        let body: Vec<f64> = (0..c).map(|_| rng.random_range(180.0..245.0)).collect();
        // Darker band across the body, a quarter of the way along.
        let horizontal = bw >= bh;
        let band = if horizontal { bw / 4 } else { bh / 4 };
        for y in top..top + bh {
            for x in left..left + bw {
                let along = if horizontal { x - left } else { y - top };
                let shade = if along == band || along == band + 1 { 0.5 } else { 1.0 };
                for ch in 0..c {
                    field[(y * w + x) * c + ch] = body[ch] * shade + rng.random_range(-10.0..10.0);
                }
            }
        }
    }

    for (dst, v) in image.iter_mut().zip(&field) {
        *dst = v.round().clamp(0.0, 255.0) as u8;
    }
}
