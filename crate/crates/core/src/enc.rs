//! Sender side: the encoded stream is `T * (r * ell)^D` back-to-back copies
//! of the LDC codeword, and its on-disk container.
//!
//! Container layout (little-endian):
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `NRST` |
//! | 4 | 2 | format version (1) |
//! | 6 | 1 | mode (0 linear, 1 general) |
//! | 7 | 1 | flags (bit 0: q range check waived) |
//! | 8 | 8 | n |
//! | 16 | 4 | r |
//! | 20 | 4 | ell |
//! | 24 | 4 | T |
//! | 28 | 4 | q |
//! | 32 | 4 | d |
//! | 36 | 4 | nvars |
//! | 40 | 4 | w |
//! | 44 | 4 | k |
//! | 48 | 8 | eps_ldc numerator |
//! | 56 | 8 | eps_ldc denominator |
//! | 64 | 8 | payload length in bits |
//! | 72 | 4 | CRC-32 of bytes 0..72 |
//!
//! The payload follows, bit `i` at bit `i % 8` of byte `i / 8`. The encoder
//! is deterministic, so no seed is recorded.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

use crate::bits::Bits;
use crate::rm_ldc::{ldc_encode, ldc_setup, LdcError, LdcOverrides, LdcParams};
use crate::stream_model::{RepeatedSource, StreamSource};

pub const MAGIC: &[u8; 4] = b"NRST";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 76;

#[derive(Debug, Error)]
pub enum EncError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ldc(#[from] LdcError),
    #[error("format: {0}")]
    Format(String),
    #[error("payload truncated: header declares {expected} bits, file holds {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Linear,
    General,
}

impl Mode {
    /// Chunks per level used when none is given.
    pub fn default_ell(self) -> u64 {
        match self {
            Mode::Linear => 16,
            Mode::General => 64,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Linear => "linear",
            Mode::General => "general",
        })
    }
}

impl FromStr for Mode {
    type Err = EncError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Mode::Linear),
            "general" => Ok(Mode::General),
            _ => Err(EncError::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StreamParams {
    n: usize,
    r: u64,
    ell: u64,
    t: u64,
    depth: u32,
    mode: Mode,
    waive_q_range: bool,
    ldc: LdcParams,
    copies_per_iter: u64,
}

/// `r^e`, `None` on overflow.
fn checked_pow(r: u64, e: u32) -> Option<u64> {
    r.checked_pow(e)
}

impl StreamParams {
    pub fn new(n: usize, r: u64, ell: u64, t: u64, mode: Mode, ldc: LdcParams) -> Result<Self, EncError> {
        Self::with_waiver(n, r, ell, t, mode, ldc, false)
    }

    fn with_waiver(
        n: usize,
        r: u64,
        ell: u64,
        t: u64,
        mode: Mode,
        ldc: LdcParams,
        waive_q_range: bool,
    ) -> Result<Self, EncError> {
        if r < 2 {
            return Err(EncError::Config(format!("r = {r}; the branching factor must be at least 2")));
        }
        if ell == 0 || t == 0 {
            return Err(EncError::Config("ell and T must be positive".into()));
        }
        let mut depth = 0u32;
        let mut p = 1u64;
        while p < n as u64 {
            p = p.checked_mul(r).ok_or_else(|| EncError::Config("n overflows".into()))?;
            depth += 1;
        }
        if p != n as u64 || depth == 0 {
            return Err(EncError::Config(format!("n = {n} must equal r^D for an integer D >= 1 (r = {r})")));
        }
        if ldc.n() != n {
            return Err(EncError::Config(format!("LDC built for n = {}, stream for n = {n}", ldc.n())));
        }
        let copies_per_iter = r
            .checked_mul(ell)
            .and_then(|re| checked_pow(re, depth))
            .ok_or_else(|| EncError::Config("(r * ell)^D overflows".into()))?;
        let sp = Self { n, r, ell, t, depth, mode, waive_q_range, ldc, copies_per_iter };
        sp.total_copies()
            .checked_mul(sp.ldc.codeword_bits())
            .ok_or_else(|| EncError::Config("stream length overflows".into()))?;
        Ok(sp)
    }

    /// Sets up the LDC as well.
    pub fn build(
        n: usize,
        r: u64,
        ell: u64,
        t: u64,
        mode: Mode,
        eps_ldc: Ratio<i64>,
        overrides: &LdcOverrides,
    ) -> Result<Self, EncError> {
        let ldc = ldc_setup(n, eps_ldc, overrides)?;
        Self::with_waiver(n, r, ell, t, mode, ldc, overrides.waive_q_range)
    }

    /// The fixed desk configuration for `mode`.
    pub fn desk(mode: Mode) -> Result<Self, EncError> {
        Self::build(16, 4, mode.default_ell(), 4, mode, Ratio::new(1, 2), &LdcOverrides::desk())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn ldc(&self) -> &LdcParams {
        &self.ldc
    }

    /// `M = (r * ell)^D`, copies per amplification iteration.
    pub fn copies_per_iteration(&self) -> u64 {
        self.copies_per_iter
    }

    pub fn total_copies(&self) -> u64 {
        self.t * self.copies_per_iter
    }

    pub fn copy_bits(&self) -> u64 {
        self.ldc.codeword_bits()
    }

    /// `T * M * N`.
    pub fn m_len(&self) -> u64 {
        self.total_copies() * self.copy_bits()
    }

    pub fn overrides(&self) -> LdcOverrides {
        LdcOverrides {
            d: Some(self.ldc.d()),
            nvars: Some(self.ldc.nvars()),
            w: Some(self.ldc.w()),
            k: Some(self.ldc.k()),
            waive_q_range: self.waive_q_range,
        }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }
}

/// `(r * ell)^(log_r(j - i))`.
pub fn copies_consumed(i: usize, j: usize, sp: &StreamParams) -> Result<u64, EncError> {
    if j <= i {
        return Err(EncError::Config(format!("empty interval ({i}, {j}]")));
    }
    let mut len = (j - i) as u64;
    let mut level = 0u32;
    while len.is_multiple_of(sp.r) {
        len /= sp.r;
        level += 1;
    }
    if len != 1 {
        return Err(EncError::Config(format!("interval length {} is not a power of r = {}", j - i, sp.r)));
    }
    Ok((sp.r * sp.ell).pow(level))
}

fn check_message(x: &Bits, sp: &StreamParams) -> Result<(), EncError> {
    if x.len() != sp.n as u64 {
        return Err(EncError::Config(format!("message has {} bits, n = {}", x.len(), sp.n)));
    }
    Ok(())
}

/// The stream as a lazily repeated codeword.
pub fn encode_source(x: &Bits, sp: &StreamParams) -> Result<RepeatedSource, EncError> {
    check_message(x, sp)?;
    let copy = ldc_encode(x, &sp.ldc)?;
    Ok(RepeatedSource::new(copy, sp.total_copies()))
}

/// The stream materialized.
pub fn encode_stream(x: &Bits, sp: &StreamParams) -> Result<Bits, EncError> {
    check_message(x, sp)?;
    let copy = ldc_encode(x, &sp.ldc)?;
    let mut out = Bits::zeros(0);
    for _ in 0..sp.total_copies() {
        out.extend_from(&copy);
    }
    Ok(out)
}

fn header_bytes(sp: &StreamParams, payload_bits: u64) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    h.push(match sp.mode {
        Mode::Linear => 0,
        Mode::General => 1,
    });
    h.push(u8::from(sp.waive_q_range));
    h.extend_from_slice(&(sp.n as u64).to_le_bytes());
    for v in [sp.r as u32, sp.ell as u32, sp.t as u32, sp.ldc.q(), sp.ldc.d(), sp.ldc.nvars(), u32::from(sp.ldc.w()), sp.ldc.k()] {
        h.extend_from_slice(&v.to_le_bytes());
    }
    let eps = sp.ldc.eps_ldc();
    h.extend_from_slice(&eps.numer().to_le_bytes());
    h.extend_from_slice(&eps.denom().to_le_bytes());
    h.extend_from_slice(&payload_bits.to_le_bytes());
    let crc = crc32fast::hash(&h);
    h.extend_from_slice(&crc.to_le_bytes());
    h
}

pub fn write_stream<W: Write>(mut out: W, sp: &StreamParams, payload: &Bits) -> Result<(), EncError> {
    if sp.r > u64::from(u32::MAX) || sp.ell > u64::from(u32::MAX) || sp.t > u64::from(u32::MAX) {
        return Err(EncError::Config("r, ell and T must fit in 32 bits".into()));
    }
    out.write_all(&header_bytes(sp, payload.len()))?;
    out.write_all(&payload.to_bytes())?;
    Ok(())
}

/// Same container, with the payload pulled from `src` 64 bits at a time.
pub fn write_source<W: Write>(mut out: W, sp: &StreamParams, src: &dyn StreamSource) -> Result<(), EncError> {
    if sp.r > u64::from(u32::MAX) || sp.ell > u64::from(u32::MAX) || sp.t > u64::from(u32::MAX) {
        return Err(EncError::Config("r, ell and T must fit in 32 bits".into()));
    }
    let len = src.len();
    out.write_all(&header_bytes(sp, len))?;
    let mut buf = Vec::with_capacity(1 << 16);
    let mut p = 0;
    while p < len {
        let w = (len - p).min(64) as u32;
        let bytes = src.bits_at(p, w).to_le_bytes();
        buf.extend_from_slice(&bytes[..(w as usize).div_ceil(8)]);
        p += u64::from(w);
        if buf.len() >= 1 << 16 {
            out.write_all(&buf)?;
            buf.clear();
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn write_stream_file(path: &Path, sp: &StreamParams, payload: &Bits) -> Result<(), EncError> {
    let mut buf = Vec::new();
    write_stream(&mut buf, sp, payload)?;
    fs::write(path, buf)?;
    Ok(())
}

fn u32_at(h: &[u8], o: usize) -> u32 {
    u32::from_le_bytes(h[o..o + 4].try_into().expect("4 bytes"))
}

fn u64_at(h: &[u8], o: usize) -> u64 {
    u64::from_le_bytes(h[o..o + 8].try_into().expect("8 bytes"))
}

pub fn read_stream<R: Read>(mut input: R) -> Result<(StreamParams, Bits), EncError> {
    let mut h = [0u8; HEADER_LEN];
    input.read_exact(&mut h).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => EncError::Format(format!("file shorter than the {HEADER_LEN}-byte header")),
        _ => EncError::Io(e),
    })?;
    if &h[0..4] != MAGIC {
        return Err(EncError::Format("bad magic, not an NRST stream".into()));
    }
    let crc = u32_at(&h, 72);
    if crc32fast::hash(&h[..72]) != crc {
        return Err(EncError::Format("header checksum mismatch".into()));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != FORMAT_VERSION {
        return Err(EncError::Format(format!("unsupported format version {version}")));
    }
    let mode = match h[6] {
        0 => Mode::Linear,
        1 => Mode::General,
        m => return Err(EncError::Format(format!("unknown mode byte {m}"))),
    };
    let waive = h[7] & 1 == 1;
    let n = usize::try_from(u64_at(&h, 8)).map_err(|_| EncError::Format("n does not fit".into()))?;
    let [r, ell, t, q, d, nvars, w, k] = std::array::from_fn(|i| u32_at(&h, 16 + 4 * i));
    let eps_num = u64_at(&h, 48) as i64;
    let eps_den = u64_at(&h, 56) as i64;
    if eps_den <= 0 {
        return Err(EncError::Format("eps_ldc denominator must be positive".into()));
    }
    let bits = u64_at(&h, 64);
    let w = u8::try_from(w).map_err(|_| EncError::Format(format!("inner width {w} out of range")))?;
    let overrides = LdcOverrides { d: Some(d), nvars: Some(nvars), w: Some(w), k: Some(k), waive_q_range: waive };
    let sp = StreamParams::build(n, r.into(), ell.into(), t.into(), mode, Ratio::new(eps_num, eps_den), &overrides)?;
    if sp.ldc.q() != q {
        return Err(EncError::Format(format!("header q = {q} disagrees with width {w}")));
    }
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    let need = bits.div_ceil(8) as usize;
    if payload.len() < need {
        return Err(EncError::Truncated { expected: bits, actual: payload.len() as u64 * 8 });
    }
    if payload.len() > need {
        return Err(EncError::Format(format!("{} trailing bytes after the payload", payload.len() - need)));
    }
    Ok((sp, Bits::from_bytes(&payload, bits)))
}

pub fn read_stream_file(path: &Path) -> Result<(StreamParams, Bits), EncError> {
    read_stream(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, r: u64, ell: u64, t: u64) -> StreamParams {
        StreamParams::build(n, r, ell, t, Mode::Linear, Ratio::new(1, 2), &LdcOverrides::default()).unwrap()
    }

    #[test]
    fn desk_length_example() {
        let sp = StreamParams::desk(Mode::Linear).unwrap();
        assert_eq!(sp.copy_bits(), 32768);
        assert_eq!(sp.copies_per_iteration(), 4096);
        assert_eq!(sp.m_len(), 4 * 4096 * 32768);
        // The same formula with N = 2048.
        assert_eq!(4 * (4u64 * 16).pow(2) * 2048, 33_554_432);
        let g = StreamParams::desk(Mode::General).unwrap();
        assert_eq!(g.copies_per_iteration(), 256 * 256);
    }

    #[test]
    fn rejects_non_power_n() {
        let ldc = ldc_setup(12, Ratio::new(1, 2), &LdcOverrides::default()).unwrap();
        let e = StreamParams::new(12, 4, 16, 4, Mode::Linear, ldc).unwrap_err();
        assert!(e.to_string().contains("r^D"));
        let ldc = ldc_setup(1, Ratio::new(1, 2), &LdcOverrides::default()).unwrap();
        assert!(StreamParams::new(1, 2, 1, 1, Mode::Linear, ldc).is_err());
    }

    #[test]
    fn copies_all_identical() {
        let sp = small(4, 4, 1, 1);
        assert_eq!(sp.total_copies(), 4);
        let x = Bits::from_bit_str("1011").unwrap();
        let s = encode_stream(&x, &sp).unwrap();
        let n = sp.copy_bits();
        assert_eq!(s.len(), 4 * n);
        let first: Vec<bool> = (0..n).map(|i| s.get(i)).collect();
        for c in 1..4 {
            assert!((0..n).all(|i| s.get(c * n + i) == first[i as usize]));
        }
        assert!(encode_stream(&Bits::zeros(5), &sp).is_err());
    }

    #[test]
    fn copies_consumed_levels() {
        let sp = small(16, 4, 3, 2);
        assert_eq!(copies_consumed(0, 1, &sp).unwrap(), 1);
        assert_eq!(copies_consumed(4, 8, &sp).unwrap(), 12);
        assert_eq!(copies_consumed(0, 16, &sp).unwrap(), sp.copies_per_iteration());
        assert!(copies_consumed(0, 3, &sp).is_err());
        // One chunk at the top holds r sections of the next level down.
        let per_chunk: u64 = (0..4).map(|a| copies_consumed(4 * a, 4 * a + 4, &sp).unwrap()).sum();
        assert_eq!(per_chunk, sp.copies_per_iteration() / sp.ell());
    }

    #[test]
    fn file_round_trip() {
        let sp = small(4, 2, 2, 1);
        let x = Bits::from_bit_str("0110").unwrap();
        let s = encode_stream(&x, &sp).unwrap();
        let mut buf = Vec::new();
        write_stream(&mut buf, &sp, &s).unwrap();
        let (back, payload) = read_stream(&buf[..]).unwrap();
        assert_eq!(payload, s);
        assert_eq!(back.n(), 4);
        assert_eq!((back.r(), back.ell(), back.t(), back.depth(), back.mode()), (2, 2, 1, 2, Mode::Linear));
        assert_eq!(back.overrides(), sp.overrides());
        assert_eq!(back.ldc().eps_ldc(), sp.ldc().eps_ldc());
        assert_eq!(back.m_len(), sp.m_len());
        // Header checksum and truncation.
        let mut bad = buf.clone();
        bad[9] ^= 1;
        assert!(matches!(read_stream(&bad[..]), Err(EncError::Format(m)) if m.contains("checksum")));
        let cut = &buf[..buf.len() - 3];
        match read_stream(cut) {
            Err(EncError::Truncated { expected, actual }) => {
                assert_eq!(expected, s.len());
                assert_eq!(actual, (s.len().div_ceil(8) - 3) * 8);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_stream(&b"NRSX"[..]), Err(EncError::Format(_))));
    }

    #[test]
    fn source_writer_matches_materialized() {
        let sp = small(4, 2, 3, 1);
        let x = Bits::from_bit_str("0110").unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_stream(&mut a, &sp, &encode_stream(&x, &sp).unwrap()).unwrap();
        write_source(&mut b, &sp, &encode_source(&x, &sp).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
