//! Word-sized modular arithmetic for the RNS chain primes.

/// A prime modulus below 2^62 with precomputed Barrett constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    // floor((2^128 - 1) / q), split into (high, low) words.
    ratio_hi: u64,
    ratio_lo: u64,
}

impl Modulus {
    pub const MAX_BITS: u32 = 62;

    /// Panics if `value < 2` or `value >= 2^62`.
    pub fn new(value: u64) -> Self {
        assert!(value >= 2, "modulus must be at least 2");
        assert!(value < (1u64 << Self::MAX_BITS), "modulus must be below 2^62");
        let ratio = u128::MAX / value as u128;
        Self {
            value,
            ratio_hi: (ratio >> 64) as u64,
            ratio_lo: ratio as u64,
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    // Conditional corrections use the sign bit as a mask. Operands are data
    // dependent, so branches (which LLVM prefers for plain selects) mispredict
    // about half the time in NTT butterflies. Valid because q < 2^62 keeps
    // every intermediate below 2^63.
    #[inline]
    fn reduce_once(&self, x: u64) -> u64 {
        let d = x.wrapping_sub(self.value);
        d.wrapping_add(self.value & (((d as i64) >> 63) as u64))
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        self.reduce_once(a + b)
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        let d = a.wrapping_sub(b);
        d.wrapping_add(self.value & (((d as i64) >> 63) as u64))
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Barrett reduction of an arbitrary 128-bit value.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        const LO: u128 = u64::MAX as u128;
        let x0 = x & LO;
        let x1 = x >> 64;
        let m0 = self.ratio_lo as u128;
        let m1 = self.ratio_hi as u128;
        let lo_lo = (x0 * m0) >> 64;
        let hi_lo = x1 * m0;
        let lo_hi = x0 * m1;
        let cross = (hi_lo & LO) + (lo_hi & LO) + lo_lo;
        let quot = x1 * m1 + (hi_lo >> 64) + (lo_hi >> 64) + (cross >> 64);
        // The quotient estimate is low by at most 2, so r < 3q < 2^64.
        let mut r = x.wrapping_sub(quot.wrapping_mul(self.value as u128)) as u64;
        if r >= 2 * self.value {
            r -= 2 * self.value;
        }
        self.reduce_once(r)
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            x % self.value
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Precomputed companion for repeated multiplication by `w` (Shoup's trick).
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(&self, x: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((x as u128 * w_shoup as u128) >> 64) as u64;
        let r = x.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.value));
        self.reduce_once(r)
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse of `a` modulo a prime modulus; `None` for zero.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            None
        } else {
            Some(self.pow(a, self.value - 2))
        }
    }

    /// Maps a signed integer into `[0, q)`.
    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        let r = (x as i128).rem_euclid(self.value as i128);
        r as u64
    }

    #[inline]
    pub fn from_i128(&self, x: i128) -> u64 {
        x.rem_euclid(self.value as i128) as u64
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, x: u64) -> i64 {
        if x > self.value / 2 {
            -((self.value - x) as i64)
        } else {
            x as i64
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primitive `order`-th root of unity mod prime `q`, where `order` is a power
/// of two dividing `q - 1`. Returns the smallest such root.
pub fn primitive_root_of_unity(q: &Modulus, order: u64) -> Option<u64> {
    let qv = q.value();
    if order < 2 || !order.is_power_of_two() || (qv - 1) % order != 0 {
        return None;
    }
    let cofactor = (qv - 1) / order;
    let mut best: Option<u64> = None;
    for g in 2..qv.min(1 << 16) {
        let root = q.pow(g, cofactor);
        // order is a power of two: primitive iff root^(order/2) == -1
        if q.pow(root, order / 2) == qv - 1 {
            // every primitive root is root^k for odd k; take the smallest
            let mut candidate = root;
            let step = q.mul(root, root);
            let mut smallest = root;
            for _ in 0..order / 2 {
                smallest = smallest.min(candidate);
                candidate = q.mul(candidate, step);
            }
            best = Some(smallest);
            break;
        }
    }
    best
}

/// `count` distinct primes congruent to 1 mod `two_n`, as close as possible to
/// `2^bits`, skipping anything in `exclude`.
pub fn primes_near_power_of_two(bits: u32, two_n: u64, count: usize, exclude: &[u64]) -> Vec<u64> {
    assert!(bits < Modulus::MAX_BITS);
    let center = 1u64 << bits;
    let base_k = center / two_n;
    let mut found = Vec::with_capacity(count);
    let mut offset: i64 = 0;
    while found.len() < count {
        // alternate above / below the target
        for k in [base_k as i64 + offset, base_k as i64 - offset - 1] {
            if k <= 0 || found.len() == count {
                continue;
            }
            let cand = k as u64 * two_n + 1;
            if cand >> Modulus::MAX_BITS != 0 {
                continue;
            }
            if is_prime(cand) && !exclude.contains(&cand) && !found.contains(&cand) {
                found.push(cand);
            }
        }
        offset += 1;
    }
    found
}

/// Largest prime below `2^bits` congruent to 1 mod `two_n`.
pub fn largest_prime_below(bits: u32, two_n: u64, exclude: &[u64]) -> Option<u64> {
    assert!(bits < Modulus::MAX_BITS);
    let mut k = ((1u64 << bits) - 1) / two_n;
    while k > 0 {
        let cand = k * two_n + 1;
        if cand < (1u64 << bits) && is_prime(cand) && !exclude.contains(&cand) {
            return Some(cand);
        }
        k -= 1;
    }
    None
}
