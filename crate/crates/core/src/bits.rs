//! Fixed-length bitstrings, the native sample type of every sampler.
//!
//! Bit `i` is atom `i`. The integer index of a bitstring is
//! `sum_i z_i 2^i` (little-endian), and the text literal lists `z_0` first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_BITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitString {
    n: u8,
    bits: u64,
}

fn mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl BitString {
    /// Builds a bitstring of length `n` from its little-endian index.
    pub fn new(n: usize, bits: u64) -> Result<Self> {
        if n == 0 || n > MAX_BITS {
            return Err(Error::arg(format!("bitstring length {n} outside 1..={MAX_BITS}")));
        }
        if bits & !mask(n) != 0 {
            return Err(Error::arg(format!("index {bits} does not fit in {n} bits")));
        }
        Ok(BitString { n: n as u8, bits })
    }

    /// Like [`BitString::new`] but silently truncates to `n` bits.
    pub fn from_index(n: usize, index: usize) -> Self {
        assert!((1..=MAX_BITS).contains(&n), "bitstring length {n} outside 1..={MAX_BITS}");
        BitString { n: n as u8, bits: index as u64 & mask(n) }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_index(n, 0)
    }

    pub fn ones(n: usize) -> Self {
        Self::from_index(n, usize::MAX)
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let mut v = 0u64;
        for (i, &b) in bits.iter().enumerate() {
            if i >= MAX_BITS {
                return Err(Error::arg("bitstring longer than 64 bits"));
            }
            if b {
                v |= 1 << i;
            }
        }
        Self::new(bits.len(), v)
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::arg(format!("non-binary entry {b}")));
        }
        let bools: Vec<bool> = bits.iter().map(|&b| b == 1).collect();
        Self::from_bools(&bools)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n as usize
    }

    /// Always false; bitstrings have at least one bit.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self) -> usize {
        self.bits as usize
    }

    #[inline]
    pub fn raw(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len());
        (self.bits >> i) & 1 == 1
    }

    #[inline]
    pub fn bit(&self, i: usize) -> u8 {
        self.get(i) as u8
    }

    #[must_use]
    pub fn flip(&self, i: usize) -> Self {
        debug_assert!(i < self.len());
        BitString { n: self.n, bits: self.bits ^ (1 << i) }
    }

    #[must_use]
    pub fn with(&self, i: usize, value: bool) -> Self {
        let bits = if value { self.bits | (1 << i) } else { self.bits & !(1 << i) };
        BitString { n: self.n, bits }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Bitwise sum modulo 2.
    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        self.check_len(other)?;
        Ok(BitString { n: self.n, bits: self.bits ^ other.bits })
    }

    pub fn hamming(&self, other: &BitString) -> Result<usize> {
        self.check_len(other)?;
        Ok((self.bits ^ other.bits).count_ones() as usize)
    }

    pub fn to_vec(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.bit(i)).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.bit(i) as f64).collect()
    }

    /// Spin basis, `s = 2z - 1`.
    pub fn to_spins(&self) -> Vec<f64> {
        (0..self.len()).map(|i| if self.get(i) { 1.0 } else { -1.0 }).collect()
    }

    /// Every bitstring of length `n`, in index order.
    pub fn all(n: usize) -> impl Iterator<Item = BitString> {
        assert!(n < 64, "cannot enumerate 2^{n} bitstrings");
        (0..1usize << n).map(move |i| BitString::from_index(n, i))
    }

    fn check_len(&self, other: &BitString) -> Result<()> {
        if self.n != other.n {
            return Err(Error::arg(format!("bitstring lengths differ: {} vs {}", self.n, other.n)));
        }
        Ok(())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::arg(format!("invalid bit character {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bools(&bits)
    }
}
