//! Presence-pattern algebra over the length-L sliding window.
//!
//! A pattern is L bits [p_1, …, p_L]; p_L marks the most recent grid slot,
//! p_1 the oldest in-window slot. Its decimal index is Σ p_j·2^{L−j}, so p_1
//! is the most significant bit. This ordering is a wire-format rule: pattern
//! strings ("101") and checkpoint leaf indices both rely on it.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;

/// Largest supported window length. 2^L networks must stay enumerable.
pub const MAX_WINDOW: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PresencePattern {
    len: usize,
    mask: u32,
}

impl PresencePattern {
    /// Pattern from its decimal index (the bit representation, p_1 = MSB).
    pub fn from_index(index: usize, len: usize) -> Self {
        assert!((1..=MAX_WINDOW).contains(&len), "window length {len} out of range");
        assert!(
            index < (1usize << len),
            "pattern index {index} out of range for L={len}"
        );
        PresencePattern {
            len,
            mask: index as u32,
        }
    }

    /// Pattern from explicit bits [p_1, …, p_L].
    pub fn from_bits(bits: &[u8]) -> Self {
        assert!(
            !bits.is_empty() && bits.len() <= MAX_WINDOW,
            "window length {} out of range",
            bits.len()
        );
        let mut mask = 0u32;
        for &b in bits {
            assert!(b <= 1, "pattern bits must be 0 or 1, got {b}");
            mask = (mask << 1) | b as u32;
        }
        PresencePattern { len: bits.len(), mask }
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_index(0, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// Decimal index: Σ p_j·2^{L−j}.
    pub fn index(&self) -> usize {
        self.mask as usize
    }

    /// Number of present slots (‖p‖₁).
    pub fn ones(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// p_j for 1-based j (p_1 oldest).
    pub fn bit(&self, j: usize) -> u8 {
        assert!(j >= 1 && j <= self.len, "bit index {j} out of 1..={}", self.len);
        ((self.mask >> (self.len - j)) & 1) as u8
    }

    /// Bits as [p_1, …, p_L].
    pub fn bits(&self) -> Vec<u8> {
        (1..=self.len).map(|j| self.bit(j)).collect()
    }

    /// Bits as 0.0/1.0, for appending to combination features.
    pub fn bits_f64(&self) -> Vec<f64> {
        (1..=self.len).map(|j| self.bit(j) as f64).collect()
    }

    /// True iff self ≤ other bitwise and self ≠ other.
    pub fn is_strict_subpattern(&self, other: &PresencePattern) -> bool {
        assert!(
            self.len == other.len,
            "pattern length mismatch: {} vs {}",
            self.len,
            other.len
        );
        self.mask != other.mask && self.mask & !other.mask == 0
    }

    /// Indices of this pattern and all its strict subpatterns, ascending.
    /// Always contains 0; cardinality is 2^‖p‖₁.
    ///
    /// Enumerates sub-masks directly (carry-rippler), so the cost is
    /// 2^‖p‖₁ rather than 2^L.
    pub fn active_set(&self) -> ActiveSet {
        let set = self.mask;
        let mut indices = Vec::with_capacity(1 << self.ones());
        let mut sub = 0u32;
        loop {
            indices.push(sub as usize);
            if sub == set {
                break;
            }
            sub = sub.wrapping_sub(set) & set;
        }
        ActiveSet(indices)
    }

    /// Window offsets of the present slots, oldest first (offset 0 = p_1).
    pub fn leaf_positions(&self) -> Vec<usize> {
        (0..self.len).filter(|&t| self.bit(t + 1) == 1).collect()
    }
}

impl fmt::Display for PresencePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 1..=self.len {
            write!(f, "{}", self.bit(j))?;
        }
        Ok(())
    }
}

impl FromStr for PresencePattern {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || s.len() > MAX_WINDOW {
            return Err(ConfigError::BadPattern(s.to_string()));
        }
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => bits.push(0),
                '1' => bits.push(1),
                _ => return Err(ConfigError::BadPattern(s.to_string())),
            }
        }
        Ok(PresencePattern::from_bits(&bits))
    }
}

/// Sorted indices of the networks eligible for a pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}
