//! Binary inner code: first-order Reed-Muller RM(1, w-1).
//!
//! A symbol with bits `(a0, a1, ..., a_{w-1})` (LSB first) encodes to the truth
//! table of `z -> a0 ^ a1 z1 ^ ... ^ a_{w-1} z_{w-1}` over `z in {0,1}^{w-1}`,
//! where `z_i` is bit `i-1` of the table index. Block length is `2^(w-1)`,
//! minimum distance exactly half of it.
//!
//! Blocks are held in a `u64`, which caps the width at 7.

use num_rational::Ratio;
use thiserror::Error;

use crate::bits::Bits;

pub const MAX_INNER_WIDTH: u8 = 7;

/// Blocks up to this many bits get a full nearest-codeword lookup table.
const TABLE_MAX_BITS: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InnerCodeError {
    #[error("inner code width {0} outside supported range 2..=7")]
    Width(u8),
    #[error("block of {got} bits, expected {expected}")]
    BlockLength { got: u64, expected: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerCodeSpec {
    pub msg_bits: u8,
    pub block_len: u32,
    /// Distance deficit below 1/2; zero for RM(1, w-1).
    pub epsilon_in: Ratio<i64>,
}

#[derive(Debug, Clone)]
pub struct InnerCode {
    spec: InnerCodeSpec,
    codewords: Vec<u64>,
    table: Option<Vec<(u16, u8)>>,
}

impl InnerCode {
    pub fn new(w: u8) -> Result<Self, InnerCodeError> {
        if !(2..=MAX_INNER_WIDTH).contains(&w) {
            return Err(InnerCodeError::Width(w));
        }
        let block_len = 1u32 << (w - 1);
        let codewords: Vec<u64> = (0..1u32 << w).map(|s| encode_rm1(s as u16, block_len)).collect();
        let mut code = Self {
            spec: InnerCodeSpec { msg_bits: w, block_len, epsilon_in: Ratio::new(0, 1) },
            codewords,
            table: None,
        };
        if block_len <= TABLE_MAX_BITS {
            let table = (0..1u64 << block_len)
                .map(|word| {
                    let (s, d) = code.brute_force(word);
                    (s, d as u8)
                })
                .collect();
            code.table = Some(table);
        }
        Ok(code)
    }

    pub fn spec(&self) -> &InnerCodeSpec {
        &self.spec
    }

    pub fn block_len(&self) -> u32 {
        self.spec.block_len
    }

    pub fn msg_bits(&self) -> u8 {
        self.spec.msg_bits
    }

    /// Minimum distance, `N_inner / 2`.
    pub fn min_distance(&self) -> u32 {
        self.spec.block_len / 2
    }

    #[inline]
    pub fn encode_word(&self, sym: u16) -> u64 {
        self.codewords[sym as usize]
    }

    pub fn encode(&self, sym: u16) -> Bits {
        Bits::from_words(vec![self.encode_word(sym)], u64::from(self.spec.block_len))
    }

    /// Nearest codeword; ties go to the smaller symbol.
    #[inline]
    pub fn decode_word(&self, word: u64) -> (u16, u32) {
        match &self.table {
            Some(t) => {
                let (s, d) = t[word as usize];
                (s, u32::from(d))
            }
            None => self.brute_force(word),
        }
    }

    fn brute_force(&self, word: u64) -> (u16, u32) {
        let mut best = (0u16, u32::MAX);
        for (s, &c) in self.codewords.iter().enumerate() {
            let d = (c ^ word).count_ones();
            if d < best.1 {
                best = (s as u16, d);
            }
        }
        best
    }

    pub fn decode(&self, word: &Bits) -> Result<(u16, u32), InnerCodeError> {
        if word.len() != u64::from(self.spec.block_len) {
            return Err(InnerCodeError::BlockLength { got: word.len(), expected: self.spec.block_len });
        }
        Ok(self.decode_word(word.word_at(0, self.spec.block_len)))
    }

    pub fn decode_all(&self, words: &[Bits]) -> Result<Vec<(u16, u32)>, InnerCodeError> {
        words.iter().map(|w| self.decode(w)).collect()
    }

    /// Hamming distance between a received block and the encoding of `sym`.
    #[inline]
    pub fn distance_to(&self, word: u64, sym: u16) -> u32 {
        (self.codewords[sym as usize] ^ word).count_ones()
    }
}

fn encode_rm1(sym: u16, block_len: u32) -> u64 {
    let a0 = u64::from(sym & 1);
    let lin = u32::from(sym >> 1);
    let mut out = 0u64;
    for t in 0..block_len {
        let bit = a0 ^ u64::from((t & lin).count_ones() & 1);
        out |= bit << t;
    }
    out
}
