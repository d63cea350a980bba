//! Little-endian binary format for keys and ciphertexts.
//!
//! ```text
//! magic    "CKKS"
//! version  u16
//! kind     u8   (1 secret key, 2 public key, 3 evaluation key, 4 ciphertext)
//! reserved u8
//! n        u32
//! chain    u16  number of active primes, followed by that many u64 primes
//! body     kind-specific; every polynomial is a repr byte followed by
//!          chain * n u64 residues, prime-major
//! ```

use super::keys::{EvaluationKey, PublicKey, SecretKey};
use super::ops::Ciphertext;
use super::{CkksError, CkksParams};
use std::sync::Arc;

use crate::ring::{RingParams, RingPoly, Representation};

pub const MAGIC: &[u8; 4] = b"CKKS";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ObjectKind {
    SecretKey = 1,
    PublicKey = 2,
    EvaluationKey = 3,
    Ciphertext = 4,
}

impl ObjectKind {
    fn from_u8(b: u8) -> Result<Self, CkksError> {
        Ok(match b {
            1 => Self::SecretKey,
            2 => Self::PublicKey,
            3 => Self::EvaluationKey,
            4 => Self::Ciphertext,
            other => return Err(CkksError::Serialization(format!("unknown object kind {other}"))),
        })
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn header(kind: ObjectKind, ring: &RingParams, level: usize) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.buf.push(kind as u8);
        w.buf.push(0);
        w.buf.extend_from_slice(&(ring.degree() as u32).to_le_bytes());
        w.buf.extend_from_slice(&((level + 1) as u16).to_le_bytes());
        for m in &ring.moduli()[..=level] {
            w.buf.extend_from_slice(&m.value().to_le_bytes());
        }
        w
    }

    fn poly(&mut self, p: &RingPoly) {
        self.buf.push(match p.representation() {
            Representation::Coefficient => 0,
            Representation::Ntt => 1,
        });
        for row in p.residues() {
            for &x in row {
                self.buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CkksError> {
        if self.pos + n > self.bytes.len() {
            return Err(CkksError::Serialization("unexpected end of input".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CkksError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CkksError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CkksError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CkksError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CkksError> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// Validates the header against `params`; returns the object's level.
    fn header(&mut self, expected: ObjectKind, ring: &RingParams) -> Result<usize, CkksError> {
        if self.take(4)? != MAGIC {
            return Err(CkksError::Serialization("bad magic".into()));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(CkksError::Serialization(format!("unsupported version {version}")));
        }
        let kind = ObjectKind::from_u8(self.u8()?)?;
        if kind != expected {
            return Err(CkksError::Serialization(format!("expected {expected:?}, found {kind:?}")));
        }
        self.u8()?;
        let n = self.u32()? as usize;
        if n != ring.degree() {
            return Err(CkksError::KeyMismatch(format!("ring degree {n} != {}", ring.degree())));
        }
        let chain = self.u16()? as usize;
        if chain == 0 || chain > ring.chain_len() {
            return Err(CkksError::KeyMismatch(format!("chain length {chain} out of range")));
        }
        for m in &ring.moduli()[..chain] {
            let q = self.u64()?;
            if q != m.value() {
                return Err(CkksError::KeyMismatch(format!("prime {q} != {}", m.value())));
            }
        }
        Ok(chain - 1)
    }

    fn poly(&mut self, ring: &Arc<RingParams>, level: usize) -> Result<RingPoly, CkksError> {
        let repr = match self.u8()? {
            0 => Representation::Coefficient,
            1 => Representation::Ntt,
            other => return Err(CkksError::Serialization(format!("bad representation tag {other}"))),
        };
        let n = ring.degree();
        let mut residues = Vec::with_capacity(level + 1);
        for _ in 0..=level {
            let raw = self.take(8 * n)?;
            residues.push(
                raw.chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        RingPoly::from_residues(ring, level, repr, residues)
            .map_err(|e| CkksError::Serialization(e.to_string()))
    }

    fn finish(&self) -> Result<(), CkksError> {
        if self.pos != self.bytes.len() {
            return Err(CkksError::Serialization(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

impl SecretKey {
    pub fn to_bytes(&self, params: &CkksParams) -> Vec<u8> {
        let mut w = Writer::header(ObjectKind::SecretKey, params.ring(), self.s.level());
        w.poly(&self.s);
        w.buf
    }

    pub fn from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<Self, CkksError> {
        let mut r = Reader { bytes, pos: 0 };
        let ring = params.ring();
        let level = r.header(ObjectKind::SecretKey, ring)?;
        let s = r.poly(ring, level)?;
        r.finish()?;
        Ok(Self { s })
    }
}

impl PublicKey {
    pub fn to_bytes(&self, params: &CkksParams) -> Vec<u8> {
        let mut w = Writer::header(ObjectKind::PublicKey, params.key_ring(), self.b.level());
        w.poly(&self.b);
        w.poly(&self.a);
        w.buf
    }

    pub fn from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<Self, CkksError> {
        let mut r = Reader { bytes, pos: 0 };
        let ring = params.key_ring();
        let level = r.header(ObjectKind::PublicKey, ring)?;
        let b = r.poly(ring, level)?;
        let a = r.poly(ring, level)?;
        r.finish()?;
        Ok(Self { b, a })
    }
}

impl EvaluationKey {
    pub fn to_bytes(&self, params: &CkksParams) -> Vec<u8> {
        let level = self.pairs.first().map_or(params.max_level(), |(b, _)| b.level());
        let mut w = Writer::header(ObjectKind::EvaluationKey, params.ring(), level);
        w.buf.extend_from_slice(&(self.base_bits as u16).to_le_bytes());
        w.buf.extend_from_slice(&(self.pairs.len() as u32).to_le_bytes());
        for (b, a) in &self.pairs {
            w.poly(b);
            w.poly(a);
        }
        w.buf
    }

    pub fn from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<Self, CkksError> {
        let mut r = Reader { bytes, pos: 0 };
        let ring = params.ring();
        let level = r.header(ObjectKind::EvaluationKey, ring)?;
        let base_bits = r.u16()? as u32;
        if base_bits == 0 || base_bits > 62 {
            return Err(CkksError::Serialization(format!("bad base width {base_bits}")));
        }
        let count = r.u32()? as usize;
        let mut pairs = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let b = r.poly(ring, level)?;
            let a = r.poly(ring, level)?;
            pairs.push((b, a));
        }
        r.finish()?;
        Ok(Self { base_bits, pairs })
    }
}

impl Ciphertext {
    pub fn to_bytes(&self, params: &CkksParams) -> Vec<u8> {
        let mut w = Writer::header(ObjectKind::Ciphertext, params.ring(), self.level());
        w.buf.extend_from_slice(&self.scale.to_bits().to_le_bytes());
        w.poly(&self.c0);
        w.poly(&self.c1);
        w.buf
    }

    pub fn from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<Self, CkksError> {
        let mut r = Reader { bytes, pos: 0 };
        let ring = params.ring();
        let level = r.header(ObjectKind::Ciphertext, ring)?;
        let scale = r.f64()?;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(CkksError::Serialization(format!("bad scale {scale}")));
        }
        let c0 = r.poly(ring, level)?;
        let c1 = r.poly(ring, level)?;
        r.finish()?;
        Ciphertext::from_parts(c0, c1, scale)
    }
}
