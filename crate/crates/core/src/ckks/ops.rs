//! Encryption, decryption and the homomorphic operations.
//!
//! Ciphertext components are kept in the coefficient domain; products move
//! through the NTT domain internally. Every multiplication is followed by
//! exactly one rescale, so the level drops by one per multiplicative layer.

use num_traits::ToPrimitive;

use super::encoding::{encode_constant, EncodedPlaintext};
use super::keys::{digit_count, digits_for_prime, EncryptionRandomness, EvaluationKey, PublicKey, SecretKey};
use super::{CkksError, CkksParams};
use crate::ring::{RingError, RingPoly, Representation};

/// Relative tolerance when comparing ciphertext scales.
pub const SCALE_TOLERANCE: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub c0: RingPoly,
    pub c1: RingPoly,
    pub scale: f64,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.c0.level()
    }

    pub(crate) fn from_parts(c0: RingPoly, c1: RingPoly, scale: f64) -> Result<Self, CkksError> {
        if c0.level() != c1.level() {
            return Err(CkksError::LevelMismatch {
                left: c0.level(),
                right: c1.level(),
            });
        }
        Ok(Self { c0, c1, scale })
    }
}

pub(crate) fn scales_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= SCALE_TOLERANCE * a.abs().max(b.abs())
}

fn check_level(left: usize, right: usize) -> Result<(), CkksError> {
    if left != right {
        Err(CkksError::LevelMismatch { left, right })
    } else {
        Ok(())
    }
}

fn check_scale(left: f64, right: f64) -> Result<(), CkksError> {
    if !scales_match(left, right) {
        Err(CkksError::ScaleMismatch { left, right })
    } else {
        Ok(())
    }
}

/// Public-key encryption of `m`, which must sit at the top level.
///
/// `(r*b + e0, r*a + e1)` is formed under the key ring's modulus `P*Q`, divided
/// by the auxiliary prime `P` with rounding, and `m` is added to the first
/// component. The division shrinks the encryption noise to rounding size.
pub fn encrypt(pk: &PublicKey, m: &EncodedPlaintext, rand: &EncryptionRandomness) -> Result<Ciphertext, CkksError> {
    let key_top = pk.b.level();
    let top = key_top - 1;
    if m.level() != top {
        return Err(CkksError::PlaintextLevel {
            expected: top,
            found: m.level(),
        });
    }
    for p in [&rand.r, &rand.e0, &rand.e1] {
        if p.level() != key_top || p.context() != pk.b.context() {
            return Err(CkksError::KeyMismatch("encryption randomness not sampled for this key".into()));
        }
    }
    let data_ring = m.poly.context();
    let r = rand.r.to_ntt()?;
    let u0 = r.mul(&pk.b)?.to_coeff()?.add(&rand.e0)?.rescale()?;
    let u1 = r.mul(&pk.a)?.to_coeff()?.add(&rand.e1)?.rescale()?;
    let u0 = RingPoly::from_residues(data_ring, top, Representation::Coefficient, u0.residues().to_vec())?;
    let c1 = RingPoly::from_residues(data_ring, top, Representation::Coefficient, u1.residues().to_vec())?;
    let c0 = u0.add(&m.poly.to_coeff()?)?;
    Ciphertext::from_parts(c0, c1, m.scale)
}

/// `c0 + c1*s` at the ciphertext's level, carrying its scale.
pub fn decrypt(sk: &SecretKey, ct: &Ciphertext) -> Result<EncodedPlaintext, CkksError> {
    let s = sk.s.drop_to_level(ct.level())?;
    let poly = ct.c0.add(&ct.c1.mul(&s)?)?;
    Ok(EncodedPlaintext {
        poly,
        scale: ct.scale,
    })
}

pub fn he_add(x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, CkksError> {
    check_level(x.level(), y.level())?;
    check_scale(x.scale, y.scale)?;
    Ciphertext::from_parts(x.c0.add(&y.c0)?, x.c1.add(&y.c1)?, x.scale)
}

pub fn he_sub(x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, CkksError> {
    check_level(x.level(), y.level())?;
    check_scale(x.scale, y.scale)?;
    Ciphertext::from_parts(x.c0.sub(&y.c0)?, x.c1.sub(&y.c1)?, x.scale)
}

pub fn he_add_plain(x: &Ciphertext, m: &EncodedPlaintext) -> Result<Ciphertext, CkksError> {
    check_level(x.level(), m.level())?;
    check_scale(x.scale, m.scale)?;
    Ciphertext::from_parts(x.c0.add(&m.poly.to_coeff()?)?, x.c1.clone(), x.scale)
}

/// Divides by the top active prime; the scale is divided by the same prime.
pub fn rescale(x: &Ciphertext) -> Result<Ciphertext, CkksError> {
    if x.level() == 0 {
        return Err(CkksError::NoLevelLeft);
    }
    let p = x.c0.context().moduli()[x.level()].value() as f64;
    Ciphertext::from_parts(x.c0.rescale()?, x.c1.rescale()?, x.scale / p)
}

/// Lowers the level without touching the scale.
pub fn mod_switch(x: &Ciphertext, to_level: usize) -> Result<Ciphertext, CkksError> {
    if to_level > x.level() {
        return Err(CkksError::NoLevelLeft);
    }
    Ciphertext::from_parts(x.c0.drop_to_level(to_level)?, x.c1.drop_to_level(to_level)?, x.scale)
}

fn check_product_headroom(x: &Ciphertext, other_scale: f64) -> Result<(), CkksError> {
    if x.level() == 0 {
        return Err(CkksError::NoLevelLeft);
    }
    let ring = x.c0.context();
    let product_bits = x.scale.log2() + other_scale.log2();
    if product_bits >= ring.log2_modulus(x.level()) - 1.0 {
        return Err(CkksError::ScaleOverflow);
    }
    Ok(())
}

/// Multiplies by a plaintext then rescales once.
pub fn he_mul_plain(x: &Ciphertext, m: &EncodedPlaintext) -> Result<Ciphertext, CkksError> {
    check_level(x.level(), m.level())?;
    check_product_headroom(x, m.scale)?;
    let (c0, c1) = match m.constant_term() {
        Some(residues) => (
            mul_by_residue_constant(&x.c0, &residues),
            mul_by_residue_constant(&x.c1, &residues),
        ),
        None => {
            let mp = m.poly.to_ntt()?;
            (
                x.c0.to_ntt()?.mul(&mp)?.to_coeff()?,
                x.c1.to_ntt()?.mul(&mp)?.to_coeff()?,
            )
        }
    };
    rescale(&Ciphertext::from_parts(c0, c1, x.scale * m.scale)?)
}

fn mul_by_residue_constant(p: &RingPoly, residues: &[u64]) -> RingPoly {
    let mut out = p.clone();
    let ctx = p.context().clone();
    for ((row, m), &w) in out.residues_mut().iter_mut().zip(ctx.moduli()).zip(residues) {
        let ws = m.shoup(w);
        for x in row.iter_mut() {
            *x = m.mul_shoup(*x, w, ws);
        }
    }
    out
}

/// Multiplies by the real constant `value` (same in every slot) and rescales.
///
/// The constant is encoded at the scale of the prime being dropped, so the
/// result keeps the input's scale.
pub fn he_mul_const(params: &CkksParams, x: &Ciphertext, value: f64) -> Result<Ciphertext, CkksError> {
    if x.level() == 0 {
        return Err(CkksError::NoLevelLeft);
    }
    let p = params.prime(x.level()) as f64;
    he_mul_plain(x, &encode_constant(params, value, p, x.level())?)
}

/// `sum_i w_i * x_i + bias`, consuming one level.
///
/// Weights are encoded at the scale of the prime being dropped; products are
/// accumulated before a single rescale, so the output scale equals the
/// common input scale.
pub fn linear_combination(
    params: &CkksParams,
    terms: &[(&Ciphertext, f64)],
    bias: f64,
) -> Result<Ciphertext, CkksError> {
    let (first, _) = terms.first().ok_or(CkksError::EmptyCombination)?;
    for (ct, _) in terms {
        check_scale(first.scale, ct.scale)?;
    }
    weighted_sum(params, terms, bias, first.scale)
}

/// `sum_i w_i * x_i + bias` landing exactly on `out_scale`, consuming one level.
///
/// Terms must share a level but may carry different scales: each weight is
/// encoded at `out_scale * p / scale_i` where `p` is the prime being dropped.
pub fn weighted_sum(
    params: &CkksParams,
    terms: &[(&Ciphertext, f64)],
    bias: f64,
    out_scale: f64,
) -> Result<Ciphertext, CkksError> {
    let (first, _) = terms.first().ok_or(CkksError::EmptyCombination)?;
    let level = first.level();
    for (ct, _) in terms {
        check_level(level, ct.level())?;
    }
    if level == 0 {
        return Err(CkksError::NoLevelLeft);
    }
    if !(out_scale > 1.0) || !out_scale.is_finite() {
        return Err(CkksError::InvalidScale(out_scale));
    }
    let p = params.prime(level) as f64;
    let acc_scale = out_scale * p;
    if acc_scale.log2() >= params.ring().log2_modulus(level) - 1.0 {
        return Err(CkksError::ScaleOverflow);
    }
    let ring = params.ring();
    let mut c0 = RingPoly::zero(ring, level, Representation::Coefficient);
    let mut c1 = c0.clone();
    for (ct, w) in terms {
        let wi = (w * acc_scale / ct.scale).round();
        if !wi.is_finite() || wi.abs() >= 2f64.powi(120) {
            return Err(CkksError::EncodingOverflow);
        }
        let wi = wi as i128;
        if wi == 0 {
            continue;
        }
        accumulate_scaled(&mut c0, &ct.c0, wi);
        accumulate_scaled(&mut c1, &ct.c1, wi);
    }
    if bias != 0.0 {
        let b = encode_constant(params, bias, acc_scale, level)?;
        c0.add_assign(&b.poly)?;
    }
    let mut out = rescale(&Ciphertext::from_parts(c0, c1, acc_scale)?)?;
    out.scale = out_scale;
    Ok(out)
}

fn accumulate_scaled(acc: &mut RingPoly, x: &RingPoly, w: i128) {
    let ctx = acc.context().clone();
    for ((a, src), m) in acc.residues_mut().iter_mut().zip(x.residues()).zip(ctx.moduli()) {
        let wr = m.from_i128(w);
        let ws = m.shoup(wr);
        for (dst, &v) in a.iter_mut().zip(src) {
            *dst = m.add(*dst, m.mul_shoup(v, wr, ws));
        }
    }
}

/// Tensor product, relinearization with `evk`, then one rescale.
/// Result scale is `scale_x * scale_y / p` for the dropped prime `p`.
pub fn he_mul(x: &Ciphertext, y: &Ciphertext, evk: &EvaluationKey) -> Result<Ciphertext, CkksError> {
    check_level(x.level(), y.level())?;
    check_product_headroom(x, y.scale)?;
    let x0 = x.c0.to_ntt()?;
    let x1 = x.c1.to_ntt()?;
    let (d0, d1, d2) = if x == y {
        let cross = x0.mul(&x1)?;
        (x0.mul(&x0)?, cross.add(&cross)?, x1.mul(&x1)?)
    } else {
        let y0 = y.c0.to_ntt()?;
        let y1 = y.c1.to_ntt()?;
        (
            x0.mul(&y0)?,
            x0.mul(&y1)?.add(&x1.mul(&y0)?)?,
            x1.mul(&y1)?,
        )
    };
    let (k0, k1) = key_switch(&d2.to_coeff()?, evk)?;
    let c0 = d0.add(&k0)?.to_coeff()?;
    let c1 = d1.add(&k1)?.to_coeff()?;
    rescale(&Ciphertext::from_parts(c0, c1, x.scale * y.scale)?)
}

pub fn he_square(x: &Ciphertext, evk: &EvaluationKey) -> Result<Ciphertext, CkksError> {
    he_mul(x, x, evk)
}

/// Splits each residue of `d` (coefficient domain) into base-2^w digits and
/// returns `sum digit_{i,t} * evk_{i,t}` in the NTT domain.
fn key_switch(d: &RingPoly, evk: &EvaluationKey) -> Result<(RingPoly, RingPoly), CkksError> {
    let ctx = d.context().clone();
    let level = d.level();
    let n = ctx.degree();
    let w = evk.base_bits;
    let mask = (1u64 << w) - 1;
    let needed: usize = ctx.moduli()[..=level]
        .iter()
        .map(|m| digits_for_prime(m.value(), w))
        .sum();
    if needed > evk.pairs.len() {
        return Err(CkksError::KeyMismatch(format!(
            "evaluation key has {} pairs, level {level} needs {needed}",
            evk.pairs.len()
        )));
    }
    // Products are below 2^124, so up to 15 fit an unreduced u128 sum.
    const LAZY: usize = 15;
    let mut acc0 = RingPoly::zero(&ctx, level, Representation::Ntt);
    let mut acc1 = acc0.clone();
    let mut wide0 = vec![0u128; n];
    let mut wide1 = vec![0u128; n];
    let mut tmp = vec![0u64; n];
    for j in 0..=level {
        let m = &ctx.moduli()[j];
        let table = ctx.ntt_table(j).ok_or(CkksError::Ring(RingError::NotNttFriendly(m.value())))?;
        wide0.fill(0);
        wide1.fill(0);
        let mut pending = 0;
        let mut pair = 0;
        for (i, row) in d.residues().iter().enumerate() {
            for t in 0..digits_for_prime(ctx.moduli()[i].value(), w) {
                let shift = w as usize * t;
                for (dst, &x) in tmp.iter_mut().zip(row) {
                    *dst = (x >> shift) & mask;
                }
                table.forward(&mut tmp);
                let (kb, ka) = &evk.pairs[pair];
                pair += 1;
                let kb_row = &kb.residues()[j];
                let ka_row = &ka.residues()[j];
                for (((a0, a1), &x), (&b, &a)) in wide0.iter_mut().zip(wide1.iter_mut()).zip(&tmp).zip(kb_row.iter().zip(ka_row)) {
                    *a0 += x as u128 * b as u128;
                    *a1 += x as u128 * a as u128;
                }
                pending += 1;
                if pending == LAZY {
                    for v in wide0.iter_mut().chain(wide1.iter_mut()) {
                        *v = m.reduce_u128(*v) as u128;
                    }
                    pending = 1;
                }
            }
        }
        for (dst, v) in acc0.residues_mut()[j].iter_mut().zip(&wide0) {
            *dst = m.reduce_u128(*v);
        }
        for (dst, v) in acc1.residues_mut()[j].iter_mut().zip(&wide1) {
            *dst = m.reduce_u128(*v);
        }
    }
    Ok((acc0, acc1))
}

/// Largest slot error magnitude between two vectors of reals.
pub fn max_abs_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Infinity-norm of the centered coefficients of `c0 + c1*s - m`, as a float.
pub fn noise_norm(sk: &SecretKey, ct: &Ciphertext, m: &EncodedPlaintext) -> Result<f64, CkksError> {
    let d = decrypt(sk, ct)?;
    let diff = d.poly.sub(&m.poly.drop_to_level(ct.level())?.to_coeff()?)?;
    Ok(diff
        .to_centered_bigints()?
        .iter()
        .map(|v| v.to_f64().unwrap_or(f64::INFINITY).abs())
        .fold(0.0, f64::max))
}

/// Digits used by relinearization at `level`.
pub fn relin_digits(params: &CkksParams, evk: &EvaluationKey, level: usize) -> usize {
    digit_count(params, level, evk.base_bits)
}
