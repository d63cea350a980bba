//! Canonical embedding between `n/2` complex slots and real polynomials.
//!
//! Slot `j` holds the evaluation of the message polynomial at `zeta^(5^j)`,
//! where `zeta = exp(i*pi/n)`; the remaining odd powers carry the complex
//! conjugates, which keeps the interpolated polynomial real.

use std::sync::Arc;

use num_complex::Complex64;

use super::{CkksError, CkksParams};
use crate::ring::{RingParams, RingPoly};

/// Precomputed roots for the O(n log n) embedding.
#[derive(Debug, Clone)]
pub struct Encoder {
    degree: usize,
    // exp(2*pi*i*k / 2n) for k in 0..=2n
    roots: Vec<Complex64>,
    // 5^j mod 2n for j < n/2
    rot_group: Vec<usize>,
}

fn bit_reverse_permute(v: &mut [Complex64]) {
    let n = v.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            v.swap(i, j);
        }
    }
}

impl Encoder {
    pub fn new(degree: usize) -> Self {
        let m = 2 * degree;
        let roots = (0..=m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m as f64))
            .collect();
        let mut rot_group = Vec::with_capacity(degree / 2);
        let mut g = 1usize;
        for _ in 0..degree / 2 {
            rot_group.push(g);
            g = g * 5 % m;
        }
        Self {
            degree,
            roots,
            rot_group,
        }
    }

    pub fn slots(&self) -> usize {
        self.degree / 2
    }

    /// Exponent `5^j mod 2n` of the root behind slot `j`.
    pub fn slot_root_exponent(&self, j: usize) -> usize {
        self.rot_group[j]
    }

    /// `z_j = sum_k v_k * zeta^(5^j * k)` for `k < n/2`, in place.
    pub fn evaluate_half(&self, v: &mut [Complex64]) {
        let size = v.len();
        let m = 2 * self.degree;
        bit_reverse_permute(v);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * (m / lenq);
                    let u = v[i + j];
                    let t = v[i + j + lenh] * self.roots[idx];
                    v[i + j] = u + t;
                    v[i + j + lenh] = u - t;
                }
            }
            len <<= 1;
        }
    }

    /// Inverse of [`Encoder::evaluate_half`], in place.
    pub fn interpolate_half(&self, v: &mut [Complex64]) {
        let size = v.len();
        let m = 2 * self.degree;
        let mut len = size;
        while len >= 2 {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - self.rot_group[j] % lenq) * (m / lenq);
                    let u = v[i + j] + v[i + j + lenh];
                    let t = (v[i + j] - v[i + j + lenh]) * self.roots[idx];
                    v[i + j] = u;
                    v[i + j + lenh] = t;
                }
            }
            len >>= 1;
        }
        bit_reverse_permute(v);
        let inv = 1.0 / size as f64;
        for x in v.iter_mut() {
            *x *= inv;
        }
    }

    /// Real coefficients `phi^{-1}(z)` of the polynomial whose slots are `z`
    /// (zero-padded to `n/2`).
    pub fn slots_to_coeffs(&self, z: &[Complex64]) -> Vec<f64> {
        let h = self.slots();
        let mut v = vec![Complex64::new(0.0, 0.0); h];
        v[..z.len()].copy_from_slice(z);
        self.interpolate_half(&mut v);
        let mut out = vec![0.0; self.degree];
        for k in 0..h {
            out[k] = v[k].re;
            out[k + h] = v[k].im;
        }
        out
    }

    /// Slot values of the real polynomial with coefficients `coeffs`.
    pub fn coeffs_to_slots(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let h = self.slots();
        // X^(n/2) evaluates to i at every slot root, since 5^j = 1 mod 4
        let mut v: Vec<Complex64> = (0..h).map(|k| Complex64::new(coeffs[k], coeffs[k + h])).collect();
        self.evaluate_half(&mut v);
        v
    }
}

/// Message slots; real workloads leave the imaginary parts zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaintextVector {
    pub values: Vec<Complex64>,
}

impl PlaintextVector {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self {
            values: values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }
}

/// `m(X) = round(scale * phi^{-1}(p))` together with the scale it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPlaintext {
    pub poly: RingPoly,
    pub scale: f64,
}

impl EncodedPlaintext {
    pub fn level(&self) -> usize {
        self.poly.level()
    }

    /// `Some(c)` when the polynomial is the constant `c` (integer, centered).
    pub(crate) fn constant_term(&self) -> Option<Vec<u64>> {
        let poly = self.poly.to_coeff().ok()?;
        let rows = poly.residues();
        if rows.iter().all(|r| r[1..].iter().all(|&x| x == 0)) {
            Some(rows.iter().map(|r| r[0]).collect())
        } else {
            None
        }
    }
}

fn round_to_poly(ring: &Arc<RingParams>, level: usize, coeffs: &[f64], scale: f64) -> Result<RingPoly, CkksError> {
    let half_log_q = ring.log2_modulus(level) - 1.0;
    let mut max_abs = 0f64;
    let rounded: Vec<f64> = coeffs
        .iter()
        .map(|&c| {
            let r = (c * scale).round();
            max_abs = max_abs.max(r.abs());
            r
        })
        .collect();
    if !max_abs.is_finite() || (max_abs > 0.0 && max_abs.log2() >= half_log_q.min(126.0)) {
        return Err(CkksError::EncodingOverflow);
    }
    if max_abs < 9.0e18 {
        let ints: Vec<i64> = rounded.iter().map(|&r| r as i64).collect();
        Ok(RingPoly::from_signed(ring, level, &ints)?)
    } else {
        let ints: Vec<i128> = rounded.iter().map(|&r| r as i128).collect();
        Ok(RingPoly::from_i128(ring, level, &ints)?)
    }
}

/// Encodes at the top level of the chain.
pub fn encode(params: &CkksParams, p: &PlaintextVector, scale: f64) -> Result<EncodedPlaintext, CkksError> {
    encode_at_level(params, p, scale, params.max_level())
}

pub fn encode_at_level(
    params: &CkksParams,
    p: &PlaintextVector,
    scale: f64,
    level: usize,
) -> Result<EncodedPlaintext, CkksError> {
    if p.len() > params.slot_count() {
        return Err(CkksError::VectorTooLong {
            len: p.len(),
            slots: params.slot_count(),
        });
    }
    if !(scale > 1.0) || !scale.is_finite() {
        return Err(CkksError::InvalidScale(scale));
    }
    if level > params.max_level() {
        return Err(CkksError::LevelOutOfRange(level));
    }
    let coeffs = params.encoder().slots_to_coeffs(&p.values);
    let poly = round_to_poly(params.ring(), level, &coeffs, scale)?;
    Ok(EncodedPlaintext { poly, scale })
}

/// Encodes the same real constant in every slot. The embedding of a constant
/// vector is the constant polynomial, so no transform is needed.
pub fn encode_constant(params: &CkksParams, value: f64, scale: f64, level: usize) -> Result<EncodedPlaintext, CkksError> {
    if !(scale > 1.0) || !scale.is_finite() {
        return Err(CkksError::InvalidScale(scale));
    }
    if level > params.max_level() {
        return Err(CkksError::LevelOutOfRange(level));
    }
    let mut coeffs = vec![0.0; params.degree()];
    coeffs[0] = value;
    let poly = round_to_poly(params.ring(), level, &coeffs, scale)?;
    Ok(EncodedPlaintext { poly, scale })
}

pub fn decode(params: &CkksParams, m: &EncodedPlaintext) -> Result<PlaintextVector, CkksError> {
    if !(m.scale > 0.0) || !m.scale.is_finite() {
        return Err(CkksError::InvalidScale(m.scale));
    }
    let coeffs: Vec<f64> = m.poly.to_centered_f64()?.iter().map(|c| c / m.scale).collect();
    Ok(PlaintextVector::new(params.encoder().coeffs_to_slots(&coeffs)))
}
