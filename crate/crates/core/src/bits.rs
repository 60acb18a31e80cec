//! Packed bit vectors. Bit `i` lives in word `i / 64` at bit position `i % 64`.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Default)]
pub struct Bits {
    words: Vec<u64>,
    len: u64,
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits(len={}, ", self.len)?;
        for i in 0..self.len.min(64) {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        if self.len > 64 {
            write!(f, "...")?;
        }
        write!(f, ")")
    }
}

impl Bits {
    pub fn zeros(len: u64) -> Self {
        Self { words: vec![0; len.div_ceil(64) as usize], len }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Self::zeros(bits.len() as u64);
        for (i, &v) in bits.iter().enumerate() {
            b.set(i as u64, v);
        }
        b
    }

    /// Parses a string of `0`/`1` characters (whitespace and `_` ignored).
    pub fn from_bit_str(s: &str) -> Option<Self> {
        let v: Option<Vec<bool>> = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect();
        v.map(|v| Self::from_bools(&v))
    }

    /// Hex literal, most significant nibble first; bit 0 of the result is the
    /// first bit of the first nibble. `len` truncates or must fit.
    pub fn from_hex(s: &str, len: u64) -> Option<Self> {
        let s = s.trim().trim_start_matches("0x");
        let mut out = Vec::new();
        for c in s.chars().filter(|c| *c != '_') {
            let n = c.to_digit(16)?;
            for k in (0..4).rev() {
                out.push((n >> k) & 1 == 1);
            }
        }
        if (out.len() as u64) < len {
            return None;
        }
        out.truncate(len as usize);
        Some(Self::from_bools(&out))
    }

    pub(crate) fn from_words(words: Vec<u64>, len: u64) -> Self {
        let mut b = Self { words, len };
        b.words.resize(len.div_ceil(64) as usize, 0);
        b.clear_tail();
        b
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: u64) -> bool {
        debug_assert!(i < self.len);
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: u64, v: bool) {
        let w = &mut self.words[(i / 64) as usize];
        let m = 1u64 << (i % 64);
        if v {
            *w |= m;
        } else {
            *w &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: u64) {
        self.words[(i / 64) as usize] ^= 1u64 << (i % 64);
    }

    /// Up to 64 bits starting at `start`, bit `start` in the result's bit 0.
    #[inline]
    pub fn word_at(&self, start: u64, width: u32) -> u64 {
        debug_assert!(width <= 64 && start + u64::from(width) <= self.len);
        if width == 0 {
            return 0;
        }
        let wi = (start / 64) as usize;
        let off = (start % 64) as u32;
        let mut v = self.words[wi] >> off;
        if off != 0 && off + width > 64 {
            v |= self.words[wi + 1] << (64 - off);
        }
        if width < 64 {
            v &= (1u64 << width) - 1;
        }
        v
    }

    /// Appends the low `width` bits of `value`.
    pub fn push_word(&mut self, value: u64, width: u32) {
        for k in 0..width {
            self.push((value >> k) & 1 == 1);
        }
    }

    pub fn push(&mut self, v: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, v);
    }

    pub fn extend_from(&mut self, other: &Bits) {
        if self.len.is_multiple_of(64) {
            self.words.truncate((self.len / 64) as usize);
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
        } else {
            for i in 0..other.len {
                self.push(other.get(i));
            }
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn hamming(&self, other: &Bits) -> u64 {
        assert_eq!(self.len, other.len, "hamming distance of unequal lengths");
        self.words.iter().zip(&other.words).map(|(a, b)| u64::from((a ^ b).count_ones())).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Little-endian byte packing: bit `i` is bit `i % 8` of byte `i / 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8) as usize;
        let mut out = Vec::with_capacity(nbytes);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(nbytes);
        out
    }

    pub fn from_bytes(bytes: &[u8], len: u64) -> Self {
        let mut words = Vec::with_capacity(len.div_ceil(64) as usize);
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words.push(u64::from_le_bytes(buf));
        }
        Self::from_words(words, len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_across_boundaries() {
        let mut b = Bits::zeros(200);
        for i in (0..200).step_by(3) {
            b.set(i, true);
        }
        for start in [0u64, 5, 60, 63, 64, 100, 136] {
            for width in [1u32, 8, 17, 64] {
                if start + u64::from(width) > 200 {
                    continue;
                }
                let w = b.word_at(start, width);
                for k in 0..width {
                    assert_eq!((w >> k) & 1 == 1, b.get(start + u64::from(k)));
                }
            }
        }
    }

    #[test]
    fn hex_and_bitstr() {
        let b = Bits::from_hex("a", 4).unwrap();
        assert_eq!(b, Bits::from_bit_str("1010").unwrap());
        assert!(Bits::from_hex("a", 5).is_none());
        assert!(Bits::from_bit_str("10x").is_none());
    }

    #[test]
    fn push_and_extend() {
        let mut a = Bits::from_bit_str("101").unwrap();
        let b = Bits::from_bit_str("0011").unwrap();
        a.extend_from(&b);
        assert_eq!(a, Bits::from_bit_str("1010011").unwrap());
        let mut c = Bits::zeros(64);
        c.extend_from(&b);
        assert_eq!(c.len(), 68);
        assert!(c.get(66) && c.get(67) && !c.get(65));
    }

    #[test]
    fn bytes_round_trip() {
        let b = Bits::from_bit_str("1100101011110000111").unwrap();
        let bytes = b.to_bytes();
        assert_eq!(bytes.len(), 3);
        assert_eq!(bytes[0], 0b0101_0011);
        assert_eq!(Bits::from_bytes(&bytes, b.len()), b);
    }
}
