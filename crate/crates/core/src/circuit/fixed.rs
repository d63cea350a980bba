use super::CircuitError;

/// Two's-complement fixed point with `bits` total and `frac` fractional bits.
/// Bit vectors are least-significant bit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPointCodec {
    bits: u32,
    frac: u32,
}

impl FixedPointCodec {
    pub fn new(bits: u32, frac: u32) -> Result<Self, CircuitError> {
        if frac >= bits || bits > 64 {
            return Err(CircuitError::InvalidCodec { bits, frac });
        }
        Ok(Self { bits, frac })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn frac(&self) -> u32 {
        self.frac
    }

    fn range(&self) -> (i128, i128) {
        let half = 1i128 << (self.bits - 1);
        (-half, half - 1)
    }

    /// Smallest and largest representable values.
    pub fn limits(&self) -> (f64, f64) {
        let (lo, hi) = self.range();
        let unit = 2f64.powi(-(self.frac as i32));
        (lo as f64 * unit, hi as f64 * unit)
    }

    /// Rounds `x * 2^frac` to the nearest integer (ties away from zero).
    pub fn to_integer(&self, x: f64) -> Result<i128, CircuitError> {
        let scaled = (x * 2f64.powi(self.frac as i32)).round();
        let (lo, hi) = self.range();
        if !scaled.is_finite() || scaled < lo as f64 || scaled > hi as f64 {
            return Err(CircuitError::Overflow {
                value: x,
                bits: self.bits,
                frac: self.frac,
            });
        }
        Ok(scaled as i128)
    }

    pub fn encode(&self, x: f64) -> Result<Vec<bool>, CircuitError> {
        let v = self.to_integer(x)?;
        Ok((0..self.bits).map(|i| (v >> i) & 1 == 1).collect())
    }

    pub fn decode(&self, bits: &[bool]) -> Result<f64, CircuitError> {
        if bits.len() != self.bits as usize {
            return Err(CircuitError::InputLength {
                expected: self.bits as usize,
                found: bits.len(),
            });
        }
        let mut v: i128 = bits.iter().enumerate().map(|(i, &b)| (b as i128) << i).sum();
        if bits[self.bits as usize - 1] {
            v -= 1i128 << self.bits;
        }
        Ok(v as f64 * 2f64.powi(-(self.frac as i32)))
    }
}

/// Unsigned integer to `width` bits, least significant first.
pub fn to_bits(v: u128, width: usize) -> Vec<bool> {
    (0..width).map(|i| i < 128 && (v >> i) & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u128 {
    bits.iter().enumerate().map(|(i, &b)| (b as u128) << i).sum()
}

/// Most-significant-first rendering, e.g. `00011000`.
pub fn bit_string(bits: &[bool]) -> String {
    bits.iter().rev().map(|&b| if b { '1' } else { '0' }).collect()
}
