use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::params::{NoiseMode, RELIN_BASE_BITS};
use super::{CkksError, CkksParams};
use crate::ring::sampling::{gaussian, ternary, uniform};
use crate::ring::{RingParams, RingPoly, Representation};

/// Ternary secret `s`; the leading 1 of `sk = (1, s)` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretKey {
    pub(crate) s: RingPoly,
}

/// `(b, a)` with `b = -a*s + e`, stored in the NTT domain over the key ring
/// (ciphertext chain plus the auxiliary encryption prime).
#[derive(Debug, Clone, PartialEq)]
pub struct PublicKey {
    pub(crate) b: RingPoly,
    pub(crate) a: RingPoly,
}

/// Key-switching pairs for `s^2`, stored in the NTT domain at the top level.
///
/// Pair `(i, t)` satisfies `b + a*s = g_{i,t} * s^2 + e` where `g_{i,t}` is
/// `2^(w*t)` modulo prime `i` and `0` modulo every other chain prime. Pairs
/// are ordered by prime, then digit; pairs for primes above a ciphertext's
/// level are simply unused.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationKey {
    pub(crate) base_bits: u32,
    pub(crate) pairs: Vec<(RingPoly, RingPoly)>,
}

impl SecretKey {
    pub fn poly(&self) -> &RingPoly {
        &self.s
    }
}

impl PublicKey {
    pub fn b(&self) -> &RingPoly {
        &self.b
    }

    pub fn a(&self) -> &RingPoly {
        &self.a
    }
}

impl EvaluationKey {
    pub fn base_bits(&self) -> u32 {
        self.base_bits
    }

    pub fn pairs(&self) -> &[(RingPoly, RingPoly)] {
        &self.pairs
    }
}

/// Base-2^w digits needed for a residue modulo `q`.
pub(crate) fn digits_for_prime(q: u64, base_bits: u32) -> usize {
    (64 - q.leading_zeros()).div_ceil(base_bits) as usize
}

/// Total digits used to decompose a polynomial at `level`.
pub(crate) fn digit_count(params: &CkksParams, level: usize, base_bits: u32) -> usize {
    params.ring().moduli()[..=level]
        .iter()
        .map(|m| digits_for_prime(m.value(), base_bits))
        .sum()
}

fn error_poly(params: &CkksParams, ring: &Arc<RingParams>, rng: &mut ChaCha20Rng) -> Result<RingPoly, CkksError> {
    let level = ring.max_level();
    match params.noise() {
        NoiseMode::Standard => Ok(gaussian(ring, level, params.sigma(), rng)?),
        NoiseMode::Degenerate => Ok(RingPoly::zero(ring, level, Representation::Coefficient)),
    }
}

/// Re-expresses a small polynomial under another chain at `ring`'s top level.
pub(crate) fn lift_small(p: &RingPoly, ring: &Arc<RingParams>) -> Result<RingPoly, CkksError> {
    Ok(RingPoly::from_bigints(ring, ring.max_level(), &p.to_coeff()?.to_centered_bigints()?)?)
}

pub fn keygen(params: &CkksParams, seed: u64) -> Result<(SecretKey, PublicKey, EvaluationKey), CkksError> {
    let ring = params.ring();
    let top = params.max_level();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let s = ternary(ring, top, 2.0 / 3.0, &mut rng);
    let s_ntt = s.to_ntt()?;

    let key_ring = params.key_ring();
    let s_key = lift_small(&s, key_ring)?.to_ntt()?;
    let a = uniform(key_ring, key_ring.max_level(), &mut rng).to_ntt()?;
    let e = error_poly(params, key_ring, &mut rng)?.to_ntt()?;
    let b = e.sub(&a.mul(&s_key)?)?;

    let s2 = s_ntt.mul(&s_ntt)?;
    let mut pairs = Vec::with_capacity(digit_count(params, top, RELIN_BASE_BITS));
    for (i, qi) in ring.moduli().iter().enumerate() {
        for t in 0..digits_for_prime(qi.value(), RELIN_BASE_BITS) {
            let a_t = uniform(ring, top, &mut rng).to_ntt()?;
            let e_t = error_poly(params, ring, &mut rng)?.to_ntt()?;
            let mut gadget = s2.clone();
            for (j, row) in gadget.residues_mut().iter_mut().enumerate() {
                if j == i {
                    let w = qi.pow(2, RELIN_BASE_BITS as u64 * t as u64);
                    let ws = qi.shoup(w);
                    for x in row.iter_mut() {
                        *x = qi.mul_shoup(*x, w, ws);
                    }
                } else {
                    row.fill(0);
                }
            }
            let b_t = e_t.add(&gadget)?.sub(&a_t.mul(&s_ntt)?)?;
            pairs.push((b_t, a_t));
        }
    }

    Ok((
        SecretKey { s },
        PublicKey { b, a },
        EvaluationKey {
            base_bits: RELIN_BASE_BITS,
            pairs,
        },
    ))
}

/// Per-encryption randomness `(r, e0, e1)`, sampled over the key ring.
#[derive(Debug, Clone, PartialEq)]
pub struct EncryptionRandomness {
    pub r: RingPoly,
    pub e0: RingPoly,
    pub e1: RingPoly,
}

impl EncryptionRandomness {
    /// `r` ternary with density 1/2; `e0`, `e1` from the error distribution.
    pub fn sample(params: &CkksParams, seed: u64) -> Result<Self, CkksError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ring = params.key_ring();
        let r = ternary(ring, ring.max_level(), 0.5, &mut rng);
        let e0 = error_poly(params, ring, &mut rng)?;
        let e1 = error_poly(params, ring, &mut rng)?;
        Ok(Self { r, e0, e1 })
    }

    /// All-zero randomness: encryption degenerates to `(m, 0)`.
    pub fn zero(params: &CkksParams) -> Self {
        let ring = params.key_ring();
        let z = RingPoly::zero(ring, ring.max_level(), Representation::Coefficient);
        Self {
            r: z.clone(),
            e0: z.clone(),
            e1: z,
        }
    }
}
