//! Seeded samplers for secret, ephemeral and error polynomials.

use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::{RingError, RingParams, RingPoly, Representation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Uniform over `R_{Q_l}`, drawn independently per chain prime.
    Uniform,
    /// Coefficients in {-1, 0, 1}.
    Ternary,
    /// Rounded normal draws, clamped at six standard deviations.
    Gaussian,
}

impl FromStr for SamplerKind {
    type Err = RingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "ternary" => Ok(Self::Ternary),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(RingError::UnknownSampler(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleParams {
    pub ring: Arc<RingParams>,
    pub level: usize,
    pub sigma: f64,
    /// Probability that a ternary coefficient is nonzero.
    pub ternary_density: f64,
}

impl SampleParams {
    pub fn new(ring: &Arc<RingParams>, level: usize) -> Self {
        Self {
            ring: ring.clone(),
            level,
            sigma: 3.2,
            ternary_density: 2.0 / 3.0,
        }
    }
}

pub fn sample_poly(kind: SamplerKind, params: &SampleParams, seed: u64) -> Result<RingPoly, RingError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match kind {
        SamplerKind::Uniform => Ok(uniform(&params.ring, params.level, &mut rng)),
        SamplerKind::Ternary => Ok(ternary(&params.ring, params.level, params.ternary_density, &mut rng)),
        SamplerKind::Gaussian => gaussian(&params.ring, params.level, params.sigma, &mut rng),
    }
}

pub fn uniform<R: Rng>(ring: &Arc<RingParams>, level: usize, rng: &mut R) -> RingPoly {
    let residues = ring.moduli()[..=level]
        .iter()
        .map(|m| (0..ring.degree()).map(|_| rng.random_range(0..m.value())).collect())
        .collect();
    RingPoly::from_residues(ring, level, Representation::Coefficient, residues)
        .expect("sampled residues are reduced")
}

pub fn ternary_coeffs<R: Rng>(n: usize, density: f64, rng: &mut R) -> Vec<i64> {
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < density {
                if rng.random::<bool>() {
                    1
                } else {
                    -1
                }
            } else {
                0
            }
        })
        .collect()
}

pub fn ternary<R: Rng>(ring: &Arc<RingParams>, level: usize, density: f64, rng: &mut R) -> RingPoly {
    let c = ternary_coeffs(ring.degree(), density, rng);
    RingPoly::from_signed(ring, level, &c).expect("degree matches")
}

pub fn gaussian_coeffs<R: Rng>(n: usize, sigma: f64, rng: &mut R) -> Result<Vec<i64>, RingError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(RingError::InvalidSigma(sigma));
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| RingError::InvalidSigma(sigma))?;
    let bound = (6.0 * sigma).floor() as i64;
    Ok((0..n)
        .map(|_| (normal.sample(rng).round() as i64).clamp(-bound, bound))
        .collect())
}

pub fn gaussian<R: Rng>(ring: &Arc<RingParams>, level: usize, sigma: f64, rng: &mut R) -> Result<RingPoly, RingError> {
    let c = gaussian_coeffs(ring.degree(), sigma, rng)?;
    RingPoly::from_signed(ring, level, &c)
}
