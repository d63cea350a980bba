use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::encoding::Encoder;
use super::CkksError;
use crate::ring::modular::{largest_prime_below, primes_near_power_of_two};
use crate::ring::RingParams;

const BUILTIN_PRESETS: &str = include_str!("presets.toml");

/// Digit width of the relinearization key decomposition.
pub const RELIN_BASE_BITS: u32 = 20;

/// Bit size of the auxiliary prime used only during public-key encryption.
pub const ENCRYPTION_PRIME_BITS: u32 = 61;

/// Whether encryption noise is sampled or forced to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Standard,
    /// Every error polynomial is zero; only encoding and rescale rounding remain.
    Degenerate,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct Preset {
    pub name: String,
    pub log_degree: u32,
    pub base_bits: u32,
    pub scale_bits: u32,
    pub depth: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PresetTable {
    #[serde(rename = "preset")]
    pub presets: Vec<Preset>,
}

impl PresetTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PRESETS).expect("built-in preset table parses")
    }

    pub fn parse(text: &str) -> Result<Self, CkksError> {
        toml::from_str(text).map_err(|e| CkksError::PresetConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CkksError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CkksError::PresetConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, name: &str) -> Result<&Preset, CkksError> {
        self.presets
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| CkksError::UnknownPreset(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.presets.iter().map(|p| p.name.as_str()).collect()
    }
}

struct Inner {
    name: Option<String>,
    ring: Arc<RingParams>,
    /// `ring`'s chain plus one auxiliary prime on top; public keys live here.
    key_ring: Arc<RingParams>,
    scale: f64,
    sigma: f64,
    noise: NoiseMode,
    encoder: Arc<Encoder>,
}

/// Ring, scaling factor and noise settings. Cheap to clone.
#[derive(Clone)]
pub struct CkksParams {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for CkksParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CkksParams")
            .field("name", &self.inner.name)
            .field("ring", &self.inner.ring)
            .field("scale", &self.inner.scale)
            .field("sigma", &self.inner.sigma)
            .field("noise", &self.inner.noise)
            .finish()
    }
}

impl CkksParams {
    pub fn new(ring: Arc<RingParams>, scale: f64, sigma: f64) -> Result<Self, CkksError> {
        if !(scale > 1.0) || !scale.is_finite() {
            return Err(CkksError::InvalidScale(scale));
        }
        if !(sigma > 0.0) {
            return Err(CkksError::InvalidParams(format!("sigma must be positive, got {sigma}")));
        }
        let encoder = Arc::new(Encoder::new(ring.degree()));
        let chain = ring.chain();
        let special = largest_prime_below(ENCRYPTION_PRIME_BITS, 2 * ring.degree() as u64, &chain)
            .ok_or_else(|| CkksError::InvalidParams("no auxiliary encryption prime".into()))?;
        let mut extended = chain;
        extended.push(special);
        let key_ring = RingParams::new(ring.degree(), &extended)?;
        Ok(Self {
            inner: Arc::new(Inner {
                name: None,
                ring,
                key_ring,
                scale,
                sigma,
                noise: NoiseMode::Standard,
                encoder,
            }),
        })
    }

    /// Builds the chain described by a preset: base prime then `depth` scale primes.
    pub fn from_preset(preset: &Preset) -> Result<Self, CkksError> {
        if preset.log_degree < 3 || preset.log_degree > 17 {
            return Err(CkksError::InvalidParams(format!(
                "log_degree {} out of range",
                preset.log_degree
            )));
        }
        if preset.base_bits >= 62 || preset.scale_bits >= 62 || preset.scale_bits < 10 {
            return Err(CkksError::InvalidParams("prime sizes must be in [10, 61] bits".into()));
        }
        let n = 1usize << preset.log_degree;
        let two_n = 2 * n as u64;
        let scale_primes = primes_near_power_of_two(preset.scale_bits, two_n, preset.depth, &[]);
        let base = largest_prime_below(preset.base_bits, two_n, &scale_primes)
            .ok_or_else(|| CkksError::InvalidParams("no base prime found".into()))?;
        let mut chain = vec![base];
        chain.extend(scale_primes);
        let ring = RingParams::new(n, &chain)?;
        let mut params = Self::new(ring, 2f64.powi(preset.scale_bits as i32), preset.sigma)?;
        Arc::get_mut(&mut params.inner).expect("fresh params").name = Some(preset.name.clone());
        Ok(params)
    }

    /// Looks up a built-in preset by name.
    pub fn preset(name: &str) -> Result<Self, CkksError> {
        Self::from_preset(PresetTable::builtin().get(name)?)
    }

    pub fn with_noise(&self, noise: NoiseMode) -> Self {
        Self {
            inner: Arc::new(Inner {
                name: self.inner.name.clone(),
                ring: self.inner.ring.clone(),
                key_ring: self.inner.key_ring.clone(),
                scale: self.inner.scale,
                sigma: self.inner.sigma,
                noise,
                encoder: self.inner.encoder.clone(),
            }),
        }
    }

    pub fn name(&self) -> Option<&str> {
        self.inner.name.as_deref()
    }

    pub fn ring(&self) -> &Arc<RingParams> {
        &self.inner.ring
    }

    /// The ciphertext chain extended by the auxiliary encryption prime.
    pub fn key_ring(&self) -> &Arc<RingParams> {
        &self.inner.key_ring
    }

    pub fn degree(&self) -> usize {
        self.inner.ring.degree()
    }

    pub fn slot_count(&self) -> usize {
        self.inner.ring.degree() / 2
    }

    /// Default scaling factor Δ for fresh encodings.
    pub fn scale(&self) -> f64 {
        self.inner.scale
    }

    pub fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    pub fn noise(&self) -> NoiseMode {
        self.inner.noise
    }

    pub fn max_level(&self) -> usize {
        self.inner.ring.max_level()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.inner.encoder
    }

    /// The prime dropped when rescaling from `level`.
    pub fn prime(&self, level: usize) -> u64 {
        self.inner.ring.moduli()[level].value()
    }
}

/// Guaranteed multiplicative depth: one rescale per chain prime beyond the base.
pub fn depth_budget(params: &CkksParams) -> usize {
    params.ring().chain_len() - 1
}
