use std::fmt;

use crate::error::{Error, Result};

/// A binarized hash code, packed little-endian: bit `i` lives at bit
/// position `i % 8` of byte `i / 8`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryKey {
    len: usize,
    bytes: Vec<u8>,
}

impl BinaryKey {
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut bytes = vec![0u8; packed_len(bits.len())];
        for (i, &bit) in bits.iter().enumerate() {
            if bit {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        Self {
            len: bits.len(),
            bytes,
        }
    }

    /// Rebuilds a key from its packed form. Padding bits past `len` must be zero.
    pub fn from_packed(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != packed_len(len) {
            return Err(Error::invalid(format!(
                "packed key of {len} bits needs {} bytes, got {}",
                packed_len(len),
                bytes.len()
            )));
        }
        if !len.is_multiple_of(8) {
            let mask = !((1u8 << (len % 8)) - 1);
            if bytes[bytes.len() - 1] & mask != 0 {
                return Err(Error::invalid("nonzero padding bits in packed key"));
            }
        }
        Ok(Self {
            len,
            bytes: bytes.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for {}-bit key",
            self.len
        );
        self.bytes[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.bit(i)).collect()
    }

    pub fn packed(&self) -> &[u8] {
        &self.bytes
    }
}

impl fmt::Debug for BinaryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryKey({self})")
    }
}

impl fmt::Display for BinaryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn packed_len(bits: usize) -> usize {
    bits.div_ceil(8)
}

/// Thresholds a real code at 0.5; exactly 0.5 maps to 1.
pub fn binarize(code: &[f64]) -> Result<BinaryKey> {
    if code.is_empty() {
        return Err(Error::invalid("cannot binarize an empty code"));
    }
    let mut bits = Vec::with_capacity(code.len());
    for (i, &v) in code.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::numeric(format!("NaN at code position {i}")));
        }
        bits.push(v >= 0.5);
    }
    Ok(BinaryKey::from_bits(&bits))
}
