//! Exact arithmetic in `R_q = Z_q[X]/(X^n + 1)`.
//!
//! Coefficients live in residue-number-system form: one word-sized residue
//! vector per active chain prime. A polynomial at level `l` is reduced modulo
//! `Q_l = q_0 * q_1 * ... * q_l`; rescaling divides by `q_l` and drops a level.

pub mod modular;
pub mod ntt;
pub mod sampling;

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

pub use modular::Modulus;
pub use ntt::NttTable;
pub use sampling::{sample_poly, SampleParams, SamplerKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RingError {
    #[error("invalid ring parameters: {0}")]
    InvalidParams(String),
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("ring degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("operands live in different ring contexts")]
    ContextMismatch,
    #[error("representation mismatch: {left:?} vs {right:?}")]
    RepresentationMismatch {
        left: Representation,
        right: Representation,
    },
    #[error("prime {0} has no primitive 2n-th root of unity")]
    NotNttFriendly(u64),
    #[error("polynomial is already at the last level")]
    LastLevel,
    #[error("level {requested} out of range (max {max})")]
    LevelOutOfRange { requested: usize, max: usize },
    #[error("expected {expected} coefficients, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("unknown sampler kind `{0}`")]
    UnknownSampler(String),
    #[error("gaussian sampler needs sigma > 0, got {0}")]
    InvalidSigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    Coefficient,
    Ntt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MulStrategy {
    /// NTT when every active prime supports it, schoolbook otherwise.
    Auto,
    Ntt,
    Schoolbook,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// CRT data for reconstructing integers modulo `Q_l`.
#[derive(Debug, Clone)]
struct CrtLevel {
    modulus: BigUint,
    // Q_l / q_j
    q_hat: Vec<BigUint>,
    // (Q_l / q_j)^{-1} mod q_j
    q_hat_inv: Vec<u64>,
}

/// Ring degree plus the modulus chain. Shared behind an `Arc` by every
/// polynomial built over it.
pub struct RingParams {
    degree: usize,
    moduli: Vec<Modulus>,
    ntt: Vec<Option<NttTable>>,
    crt: Vec<CrtLevel>,
    // last_inv[l][i] = q_l^{-1} mod q_i for i < l
    last_inv: Vec<Vec<u64>>,
}

impl fmt::Debug for RingParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RingParams")
            .field("degree", &self.degree)
            .field("chain", &self.chain())
            .finish()
    }
}

impl PartialEq for RingParams {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree && self.moduli == other.moduli
    }
}

impl RingParams {
    pub fn new(degree: usize, chain: &[u64]) -> Result<Arc<Self>, RingError> {
        if !degree.is_power_of_two() || degree < 8 {
            return Err(RingError::InvalidParams(format!(
                "ring degree must be a power of two >= 8, got {degree}"
            )));
        }
        if chain.is_empty() {
            return Err(RingError::InvalidParams("empty modulus chain".into()));
        }
        for (i, &q) in chain.iter().enumerate() {
            if q >= 1 << Modulus::MAX_BITS || !modular::is_prime(q) {
                return Err(RingError::InvalidParams(format!(
                    "chain entry {q} is not a prime below 2^62"
                )));
            }
            if chain[..i].contains(&q) {
                return Err(RingError::InvalidParams(format!("duplicate prime {q}")));
            }
        }
        let moduli: Vec<Modulus> = chain.iter().map(|&q| Modulus::new(q)).collect();
        let ntt = moduli.iter().map(|&m| NttTable::new(m, degree)).collect();

        let mut crt = Vec::with_capacity(chain.len());
        for level in 0..chain.len() {
            let modulus: BigUint = chain[..=level]
                .iter()
                .fold(BigUint::one(), |acc, &q| acc * q);
            let mut q_hat = Vec::with_capacity(level + 1);
            let mut q_hat_inv = Vec::with_capacity(level + 1);
            for (j, m) in moduli[..=level].iter().enumerate() {
                let hat = &modulus / chain[j];
                let hat_mod = (&hat % chain[j]).to_u64().unwrap();
                q_hat_inv.push(m.inv(hat_mod).expect("chain primes are distinct"));
                q_hat.push(hat);
            }
            crt.push(CrtLevel {
                modulus,
                q_hat,
                q_hat_inv,
            });
        }
        let last_inv = (0..chain.len())
            .map(|l| {
                moduli[..l]
                    .iter()
                    .map(|m| m.inv(chain[l]).expect("chain primes are distinct"))
                    .collect()
            })
            .collect();

        Ok(Arc::new(Self {
            degree,
            moduli,
            ntt,
            crt,
            last_inv,
        }))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn chain(&self) -> Vec<u64> {
        self.moduli.iter().map(|m| m.value()).collect()
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.moduli
    }

    pub fn chain_len(&self) -> usize {
        self.moduli.len()
    }

    pub fn max_level(&self) -> usize {
        self.moduli.len() - 1
    }

    /// Per-prime NTT support (prime ≡ 1 mod 2n with a primitive root found).
    pub fn ntt_friendly(&self) -> Vec<bool> {
        self.ntt.iter().map(Option::is_some).collect()
    }

    pub fn ntt_table(&self, index: usize) -> Option<&NttTable> {
        self.ntt[index].as_ref()
    }

    /// `Q_l` as an exact integer.
    pub fn coeff_modulus(&self, level: usize) -> &BigUint {
        &self.crt[level].modulus
    }

    /// `log2(Q_l)` as a float.
    pub fn log2_modulus(&self, level: usize) -> f64 {
        self.moduli[..=level]
            .iter()
            .map(|m| (m.value() as f64).log2())
            .sum()
    }

    /// Reconstructs the integer in `[0, Q_l)` with the given residues.
    pub fn crt_reconstruct(&self, level: usize, residues: &[u64]) -> BigUint {
        let crt = &self.crt[level];
        let mut acc = BigUint::zero();
        for (j, &r) in residues.iter().enumerate().take(level + 1) {
            let y = self.moduli[j].mul(r, crt.q_hat_inv[j]);
            if y != 0 {
                acc += &crt.q_hat[j] * y;
            }
        }
        acc % &crt.modulus
    }

    fn check_level(&self, level: usize) -> Result<(), RingError> {
        if level >= self.moduli.len() {
            Err(RingError::LevelOutOfRange {
                requested: level,
                max: self.max_level(),
            })
        } else {
            Ok(())
        }
    }
}

/// An element of `R_{Q_l}` in RNS form.
#[derive(Clone)]
pub struct RingPoly {
    ctx: Arc<RingParams>,
    level: usize,
    repr: Representation,
    residues: Vec<Vec<u64>>,
}

impl fmt::Debug for RingPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RingPoly")
            .field("degree", &self.ctx.degree)
            .field("level", &self.level)
            .field("repr", &self.repr)
            .finish_non_exhaustive()
    }
}

impl PartialEq for RingPoly {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.ctx, &other.ctx) || *self.ctx == *other.ctx)
            && self.level == other.level
            && self.repr == other.repr
            && self.residues == other.residues
    }
}

impl Eq for RingPoly {}

impl RingPoly {
    pub fn zero(ctx: &Arc<RingParams>, level: usize, repr: Representation) -> Self {
        ctx.check_level(level).expect("level within chain");
        Self {
            ctx: ctx.clone(),
            level,
            repr,
            residues: vec![vec![0; ctx.degree]; level + 1],
        }
    }

    /// Coefficient-domain polynomial from signed integer coefficients.
    pub fn from_signed(ctx: &Arc<RingParams>, level: usize, coeffs: &[i64]) -> Result<Self, RingError> {
        ctx.check_level(level)?;
        if coeffs.len() != ctx.degree {
            return Err(RingError::LengthMismatch {
                expected: ctx.degree,
                found: coeffs.len(),
            });
        }
        let residues = ctx.moduli[..=level]
            .iter()
            .map(|m| coeffs.iter().map(|&c| m.from_i64(c)).collect())
            .collect();
        Ok(Self {
            ctx: ctx.clone(),
            level,
            repr: Representation::Coefficient,
            residues,
        })
    }

    pub fn from_i128(ctx: &Arc<RingParams>, level: usize, coeffs: &[i128]) -> Result<Self, RingError> {
        ctx.check_level(level)?;
        if coeffs.len() != ctx.degree {
            return Err(RingError::LengthMismatch {
                expected: ctx.degree,
                found: coeffs.len(),
            });
        }
        let residues = ctx.moduli[..=level]
            .iter()
            .map(|m| coeffs.iter().map(|&c| m.from_i128(c)).collect())
            .collect();
        Ok(Self {
            ctx: ctx.clone(),
            level,
            repr: Representation::Coefficient,
            residues,
        })
    }

    /// Coefficient-domain polynomial from arbitrary-precision coefficients.
    pub fn from_bigints(ctx: &Arc<RingParams>, level: usize, coeffs: &[BigInt]) -> Result<Self, RingError> {
        ctx.check_level(level)?;
        if coeffs.len() != ctx.degree {
            return Err(RingError::LengthMismatch {
                expected: ctx.degree,
                found: coeffs.len(),
            });
        }
        let residues = ctx.moduli[..=level]
            .iter()
            .map(|m| {
                let q = BigInt::from(m.value());
                coeffs
                    .iter()
                    .map(|c| {
                        let mut r = c % &q;
                        if r < BigInt::zero() {
                            r += &q;
                        }
                        r.to_u64().unwrap()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            ctx: ctx.clone(),
            level,
            repr: Representation::Coefficient,
            residues,
        })
    }

    /// Raw residues, one vector per active prime. Each value must already be
    /// reduced below its prime.
    pub fn from_residues(
        ctx: &Arc<RingParams>,
        level: usize,
        repr: Representation,
        residues: Vec<Vec<u64>>,
    ) -> Result<Self, RingError> {
        ctx.check_level(level)?;
        if residues.len() != level + 1 {
            return Err(RingError::LengthMismatch {
                expected: level + 1,
                found: residues.len(),
            });
        }
        for (row, m) in residues.iter().zip(&ctx.moduli) {
            if row.len() != ctx.degree {
                return Err(RingError::LengthMismatch {
                    expected: ctx.degree,
                    found: row.len(),
                });
            }
            if row.iter().any(|&x| x >= m.value()) {
                return Err(RingError::InvalidParams(format!(
                    "residue not reduced modulo {}",
                    m.value()
                )));
            }
        }
        Ok(Self {
            ctx: ctx.clone(),
            level,
            repr,
            residues,
        })
    }

    /// The constant polynomial `c`.
    pub fn constant(ctx: &Arc<RingParams>, level: usize, c: i128) -> Self {
        let mut p = Self::zero(ctx, level, Representation::Coefficient);
        for (row, m) in p.residues.iter_mut().zip(&ctx.moduli) {
            row[0] = m.from_i128(c);
        }
        p
    }

    /// `X^k` for any `k`, using `X^n = -1`.
    pub fn monomial(ctx: &Arc<RingParams>, level: usize, k: usize) -> Self {
        let n = ctx.degree;
        let mut p = Self::zero(ctx, level, Representation::Coefficient);
        let negate = (k / n) % 2 == 1;
        for (row, m) in p.residues.iter_mut().zip(&ctx.moduli) {
            row[k % n] = if negate { m.value() - 1 } else { 1 };
        }
        p
    }

    pub fn context(&self) -> &Arc<RingParams> {
        &self.ctx
    }

    pub fn degree(&self) -> usize {
        self.ctx.degree
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn residues(&self) -> &[Vec<u64>] {
        &self.residues
    }

    pub(crate) fn residues_mut(&mut self) -> &mut [Vec<u64>] {
        &mut self.residues
    }

    pub fn is_zero(&self) -> bool {
        self.residues.iter().all(|r| r.iter().all(|&x| x == 0))
    }

    fn check_compatible(&self, other: &Self) -> Result<(), RingError> {
        if self.ctx.degree != other.ctx.degree {
            return Err(RingError::DegreeMismatch {
                left: self.ctx.degree,
                right: other.ctx.degree,
            });
        }
        if !Arc::ptr_eq(&self.ctx, &other.ctx) && *self.ctx != *other.ctx {
            return Err(RingError::ContextMismatch);
        }
        if self.level != other.level {
            return Err(RingError::LevelMismatch {
                left: self.level,
                right: other.level,
            });
        }
        if self.repr != other.repr {
            return Err(RingError::RepresentationMismatch {
                left: self.repr,
                right: other.repr,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&Modulus, u64, u64) -> u64) -> Result<Self, RingError> {
        self.check_compatible(other)?;
        let residues = self
            .residues
            .iter()
            .zip(&other.residues)
            .zip(&self.ctx.moduli)
            .map(|((a, b), m)| a.iter().zip(b).map(|(&x, &y)| f(m, x, y)).collect())
            .collect();
        Ok(Self {
            ctx: self.ctx.clone(),
            level: self.level,
            repr: self.repr,
            residues,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, RingError> {
        self.zip_with(other, |m, x, y| m.add(x, y))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, RingError> {
        self.zip_with(other, |m, x, y| m.sub(x, y))
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for (row, m) in out.residues.iter_mut().zip(&self.ctx.moduli) {
            for x in row.iter_mut() {
                *x = m.neg(*x);
            }
        }
        out
    }

    pub(crate) fn add_assign(&mut self, other: &Self) -> Result<(), RingError> {
        self.check_compatible(other)?;
        for ((a, b), m) in self.residues.iter_mut().zip(&other.residues).zip(&self.ctx.moduli) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = m.add(*x, y);
            }
        }
        Ok(())
    }

    /// Multiplies every coefficient by a signed integer scalar. Valid in
    /// either representation.
    pub fn mul_scalar(&self, c: i128) -> Self {
        let mut out = self.clone();
        for (row, m) in out.residues.iter_mut().zip(&self.ctx.moduli) {
            let w = m.from_i128(c);
            let ws = m.shoup(w);
            for x in row.iter_mut() {
                *x = m.mul_shoup(*x, w, ws);
            }
        }
        out
    }

    /// Negacyclic product, choosing the NTT path when available.
    pub fn mul(&self, other: &Self) -> Result<Self, RingError> {
        self.mul_with(other, MulStrategy::Auto)
    }

    pub fn mul_with(&self, other: &Self, strategy: MulStrategy) -> Result<Self, RingError> {
        self.check_compatible(other)?;
        let friendly = self.ctx.ntt[..=self.level].iter().all(Option::is_some);
        match (strategy, self.repr) {
            (_, Representation::Ntt) => self.zip_with(other, |m, x, y| m.mul(x, y)),
            (MulStrategy::Schoolbook, _) => Ok(self.mul_schoolbook(other)),
            (MulStrategy::Auto, _) if !friendly => Ok(self.mul_schoolbook(other)),
            _ => {
                let a = self.to_ntt()?;
                let b = other.to_ntt()?;
                a.zip_with(&b, |m, x, y| m.mul(x, y))?.to_coeff()
            }
        }
    }

    fn mul_schoolbook(&self, other: &Self) -> Self {
        let n = self.ctx.degree;
        let residues = self
            .residues
            .iter()
            .zip(&other.residues)
            .zip(&self.ctx.moduli)
            .map(|((a, b), m)| {
                let mut out = vec![0u64; n];
                for i in 0..n {
                    if a[i] == 0 {
                        continue;
                    }
                    for j in 0..n {
                        let p = m.mul(a[i], b[j]);
                        let k = i + j;
                        if k < n {
                            out[k] = m.add(out[k], p);
                        } else {
                            out[k - n] = m.sub(out[k - n], p);
                        }
                    }
                }
                out
            })
            .collect();
        Self {
            ctx: self.ctx.clone(),
            level: self.level,
            repr: Representation::Coefficient,
            residues,
        }
    }

    pub fn ntt_transform(&self, direction: Direction) -> Result<Self, RingError> {
        match direction {
            Direction::Forward => self.to_ntt(),
            Direction::Inverse => self.to_coeff(),
        }
    }

    /// Forward NTT; a no-op on polynomials already in the NTT domain.
    pub fn to_ntt(&self) -> Result<Self, RingError> {
        if self.repr == Representation::Ntt {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for (i, row) in out.residues.iter_mut().enumerate() {
            let table = self.ctx.ntt[i]
                .as_ref()
                .ok_or(RingError::NotNttFriendly(self.ctx.moduli[i].value()))?;
            table.forward(row);
        }
        out.repr = Representation::Ntt;
        Ok(out)
    }

    /// Inverse NTT; a no-op on coefficient-domain polynomials.
    pub fn to_coeff(&self) -> Result<Self, RingError> {
        if self.repr == Representation::Coefficient {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for (i, row) in out.residues.iter_mut().enumerate() {
            let table = self.ctx.ntt[i]
                .as_ref()
                .ok_or(RingError::NotNttFriendly(self.ctx.moduli[i].value()))?;
            table.inverse(row);
        }
        out.repr = Representation::Coefficient;
        Ok(out)
    }

    /// Divides by the top active prime with rounding to nearest and drops one
    /// level. The representation of the input is preserved.
    pub fn rescale(&self) -> Result<Self, RingError> {
        if self.level == 0 {
            return Err(RingError::LastLevel);
        }
        let was_ntt = self.repr == Representation::Ntt;
        let src = self.to_coeff()?;
        let top = self.level;
        let p = self.ctx.moduli[top];
        let last = &src.residues[top];
        let residues = (0..top)
            .map(|i| {
                let m = &self.ctx.moduli[i];
                let inv = self.ctx.last_inv[top][i];
                let inv_s = m.shoup(inv);
                src.residues[i]
                    .iter()
                    .zip(last)
                    .map(|(&a, &r)| {
                        // a - centered(r) is an exact multiple of p
                        let rc = m.from_i64(p.center(r));
                        m.mul_shoup(m.sub(a, rc), inv, inv_s)
                    })
                    .collect()
            })
            .collect();
        let out = Self {
            ctx: self.ctx.clone(),
            level: top - 1,
            repr: Representation::Coefficient,
            residues,
        };
        if was_ntt {
            out.to_ntt()
        } else {
            Ok(out)
        }
    }

    /// Reduces modulo a shorter prefix of the chain without dividing.
    pub fn drop_to_level(&self, level: usize) -> Result<Self, RingError> {
        if level > self.level {
            return Err(RingError::LevelOutOfRange {
                requested: level,
                max: self.level,
            });
        }
        let mut out = self.clone();
        out.residues.truncate(level + 1);
        out.level = level;
        Ok(out)
    }

    /// Coefficients as integers in `[0, Q_l)`.
    pub fn to_biguints(&self) -> Result<Vec<BigUint>, RingError> {
        let c = self.to_coeff()?;
        let n = self.ctx.degree;
        let mut buf = vec![0u64; self.level + 1];
        Ok((0..n)
            .map(|k| {
                for (j, row) in c.residues.iter().enumerate() {
                    buf[j] = row[k];
                }
                self.ctx.crt_reconstruct(self.level, &buf)
            })
            .collect())
    }

    /// Coefficients in the centered range `(-Q_l/2, Q_l/2]`.
    pub fn to_centered_bigints(&self) -> Result<Vec<BigInt>, RingError> {
        let q = self.ctx.coeff_modulus(self.level);
        let half = q >> 1;
        Ok(self
            .to_biguints()?
            .into_iter()
            .map(|v| {
                if v > half {
                    BigInt::from(v) - BigInt::from(q.clone())
                } else {
                    BigInt::from(v)
                }
            })
            .collect())
    }

    /// Centered coefficients as floats.
    pub fn to_centered_f64(&self) -> Result<Vec<f64>, RingError> {
        if self.level == 0 {
            let c = self.to_coeff()?;
            let m = &self.ctx.moduli[0];
            return Ok(c.residues[0].iter().map(|&x| m.center(x) as f64).collect());
        }
        Ok(self
            .to_centered_bigints()?
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect())
    }
}
