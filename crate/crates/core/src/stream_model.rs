//! Noiseless streaming algorithms and the one-pass bit stream.
//!
//! States are fixed-width bit strings held in a `u64`; outputs are `u64`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::bits::Bits;
use crate::channel::CorruptionPattern;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("stream underrun: requested {requested} bits, {remaining} remain")]
    Underrun { requested: u64, remaining: u64 },
    #[error("block offsets must be ascending, non-overlapping and inside the span")]
    Offsets,
    #[error("algorithm `{0}` needs {1}")]
    Missing(&'static str, &'static str),
    #[error("{0}")]
    Config(String),
}

/// A deterministic one-pass algorithm over bits.
pub trait StreamingAlgorithm: Send + Sync {
    fn name(&self) -> String;
    fn state_bits(&self) -> u32;
    fn init_state(&self) -> u64;
    fn step(&self, state: u64, bit: bool) -> u64;
    fn output(&self, state: u64) -> u64;

    /// `A(q, bits)`: fold `step` from `state`.
    fn run_from(&self, state: u64, bits: &mut dyn Iterator<Item = bool>) -> u64 {
        bits.fold(state, |s, b| self.step(s, b))
    }
}

pub fn run_noiseless(a: &dyn StreamingAlgorithm, x: &Bits) -> u64 {
    a.output(a.run_from(a.init_state(), &mut x.iter()))
}

fn bits_for(values: u64) -> u32 {
    // Width needed for values in 0..values.
    if values <= 1 {
        0
    } else {
        64 - (values - 1).leading_zeros()
    }
}

/// `A(x) = g_1(x_1) + ... + g_n(x_n)` over `Z_p`, `p` prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearStreamingAlgorithm {
    name: String,
    modulus: u64,
    /// `g[i]` holds `(g_{i+1}(0), g_{i+1}(1))`.
    g: Vec<[u64; 2]>,
}

impl LinearStreamingAlgorithm {
    pub fn new(name: impl Into<String>, modulus: u64, g: Vec<[u64; 2]>) -> Result<Self, StreamError> {
        if modulus < 2 || !is_prime(modulus) {
            return Err(StreamError::Config(format!("modulus {modulus} is not prime")));
        }
        let g = g.into_iter().map(|[a, b]| [a % modulus, b % modulus]).collect();
        Ok(Self { name: name.into(), modulus, g })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn field_bits(&self) -> u32 {
        bits_for(self.modulus)
    }

    pub fn zero(&self) -> u64 {
        0
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        (a + b) % self.modulus
    }

    /// `g_i(bit)` for 1-based `i`.
    pub fn g(&self, i: usize, bit: bool) -> u64 {
        self.g[i - 1][usize::from(bit)]
    }

    pub fn eval(&self, x: &Bits) -> u64 {
        self.partial_sum(0, self.n(), x)
    }

    /// `A_{i,j}(x) = g_{i+1}(x_{i+1}) + ... + g_j(x_j)`.
    pub fn partial_sum(&self, i: usize, j: usize, x: &Bits) -> u64 {
        assert!(i <= j && j <= self.n(), "partial sum bounds {i}..{j} outside 0..={}", self.n());
        (i + 1..=j).fold(0, |acc, t| self.add(acc, self.g(t, x.get(t as u64 - 1))))
    }
}

pub fn partial_sum(l: &LinearStreamingAlgorithm, i: usize, j: usize, x: &Bits) -> u64 {
    l.partial_sum(i, j, x)
}

fn is_prime(p: u64) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

fn next_prime_above(n: u64) -> u64 {
    (n + 1..).find(|&p| is_prime(p)).expect("primes are unbounded")
}

/// A linear algorithm run as a general one: the state packs the position
/// counter (low bits, mod n) with the partial sum.
#[derive(Debug, Clone)]
pub struct LiftedLinear {
    inner: LinearStreamingAlgorithm,
    pos_bits: u32,
}

pub fn lift_linear(l: &LinearStreamingAlgorithm) -> LiftedLinear {
    LiftedLinear { inner: l.clone(), pos_bits: bits_for(l.n() as u64) }
}

impl LiftedLinear {
    pub fn linear(&self) -> &LinearStreamingAlgorithm {
        &self.inner
    }
}

impl StreamingAlgorithm for LiftedLinear {
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn state_bits(&self) -> u32 {
        self.pos_bits + self.inner.field_bits()
    }

    fn init_state(&self) -> u64 {
        0
    }

    fn step(&self, state: u64, bit: bool) -> u64 {
        let n = self.inner.n() as u64;
        let pos = state & ((1u64 << self.pos_bits) - 1);
        let sum = state >> self.pos_bits;
        let sum = self.inner.add(sum, self.inner.g(pos as usize + 1, bit));
        (sum << self.pos_bits) | ((pos + 1) % n)
    }

    fn output(&self, state: u64) -> u64 {
        state >> self.pos_bits
    }
}

pub fn parity(n: usize) -> LinearStreamingAlgorithm {
    LinearStreamingAlgorithm::new("parity", 2, vec![[0, 1]; n]).expect("2 is prime")
}

/// Inner product with a fixed `y` over `F_2`.
pub fn dot(y: &Bits) -> LinearStreamingAlgorithm {
    LinearStreamingAlgorithm::new("dot", 2, y.iter().map(|b| [0, u64::from(b)]).collect()).expect("2 is prime")
}

/// `sum_i i * x_i` over `Z_p`.
pub fn weighted_sum(n: usize, p: u64) -> Result<LinearStreamingAlgorithm, StreamError> {
    LinearStreamingAlgorithm::new("sum", p, (1..=n as u64).map(|i| [0, i % p]).collect())
}

/// Number of ones, exact: summed over the smallest prime above `n`.
pub fn bit_count(n: usize) -> LinearStreamingAlgorithm {
    LinearStreamingAlgorithm::new("count", next_prime_above(n as u64), vec![[0, 1]; n]).expect("prime")
}

pub const DEFAULT_SUM_MODULUS: u64 = 17;

/// Index problem: the stream is a run of pairs, each `index_bits` bits of
/// index (MSB first) then one value bit. Output is the value of the last
/// pair whose index equals `target` (0 if none).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexAlgorithm {
    pub index_bits: u32,
    pub target: u64,
    phase_bits: u32,
}

impl IndexAlgorithm {
    pub fn new(index_bits: u32, target: u64) -> Result<Self, StreamError> {
        if !(1..=16).contains(&index_bits) || target >= 1 << index_bits {
            return Err(StreamError::Config(format!("target {target} needs index width 1..=16 covering it")));
        }
        Ok(Self { index_bits, target, phase_bits: bits_for(u64::from(index_bits) + 1) })
    }

    /// Smallest index width whose pairs tile `n` bits and can name every pair.
    pub fn default_width(n: usize) -> Option<u32> {
        (1..=16u32).find(|&b| n.is_multiple_of(b as usize + 1) && (1usize << b) >= n / (b as usize + 1))
    }

    /// Binarizes `(index, value)` pairs.
    pub fn encode_pairs(&self, pairs: &[(u64, bool)]) -> Bits {
        let mut out = Bits::zeros(0);
        for &(i, v) in pairs {
            for k in (0..self.index_bits).rev() {
                out.push((i >> k) & 1 == 1);
            }
            out.push(v);
        }
        out
    }
}

impl StreamingAlgorithm for IndexAlgorithm {
    fn name(&self) -> String {
        "index".into()
    }

    fn state_bits(&self) -> u32 {
        self.phase_bits + self.index_bits + 1
    }

    fn init_state(&self) -> u64 {
        0
    }

    fn step(&self, state: u64, bit: bool) -> u64 {
        let b = self.index_bits;
        let phase = state & ((1 << self.phase_bits) - 1);
        let idx = (state >> self.phase_bits) & ((1 << b) - 1);
        let mut ans = state >> (self.phase_bits + b);
        let (phase, idx) = if phase < u64::from(b) {
            (phase + 1, ((idx << 1) | u64::from(bit)) & ((1 << b) - 1))
        } else {
            if idx == self.target {
                ans = u64::from(bit);
            }
            (0, 0)
        };
        phase | (idx << self.phase_bits) | (ans << (self.phase_bits + b))
    }

    fn output(&self, state: u64) -> u64 {
        state >> (self.phase_bits + self.index_bits)
    }
}

/// Fixed four-state permutation automaton; bit 0 swaps states pairwise,
/// bit 1 cycles `0 -> 2 -> 1 -> 3 -> 0`. Accepts in state 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dfa4;

impl Dfa4 {
    pub const DELTA: [[u64; 2]; 4] = [[1, 2], [0, 3], [3, 1], [2, 0]];
    pub const ACCEPT: u64 = 0;
}

impl StreamingAlgorithm for Dfa4 {
    fn name(&self) -> String {
        "dfa".into()
    }

    fn state_bits(&self) -> u32 {
        2
    }

    fn init_state(&self) -> u64 {
        0
    }

    fn step(&self, state: u64, bit: bool) -> u64 {
        Self::DELTA[state as usize][usize::from(bit)]
    }

    fn output(&self, state: u64) -> u64 {
        u64::from(state == Self::ACCEPT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmId {
    Parity,
    Dot,
    Index,
    Dfa,
    Sum,
    Count,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 6] =
        [AlgorithmId::Parity, AlgorithmId::Dot, AlgorithmId::Index, AlgorithmId::Dfa, AlgorithmId::Sum, AlgorithmId::Count];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::Parity => "parity",
            AlgorithmId::Dot => "dot",
            AlgorithmId::Index => "index",
            AlgorithmId::Dfa => "dfa",
            AlgorithmId::Sum => "sum",
            AlgorithmId::Count => "count",
        }
    }

    pub fn is_linear(self) -> bool {
        !matches!(self, AlgorithmId::Index | AlgorithmId::Dfa)
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = StreamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| StreamError::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Inputs for the parameterized algorithms.
#[derive(Debug, Clone, Default)]
pub struct AlgorithmInputs {
    pub y: Option<Bits>,
    pub target: Option<u64>,
    pub modulus: Option<u64>,
}

#[derive(Clone)]
pub enum Algorithm {
    Linear(LinearStreamingAlgorithm),
    General(Arc<dyn StreamingAlgorithm>),
}

impl fmt::Debug for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Linear(l) => write!(f, "Linear({})", l.name()),
            Algorithm::General(g) => write!(f, "General({})", g.name()),
        }
    }
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Algorithm::Linear(l) => l.name().to_string(),
            Algorithm::General(g) => g.name(),
        }
    }

    pub fn linear(&self) -> Option<&LinearStreamingAlgorithm> {
        match self {
            Algorithm::Linear(l) => Some(l),
            Algorithm::General(_) => None,
        }
    }

    /// The general form; linear algorithms are lifted.
    pub fn general(&self) -> Arc<dyn StreamingAlgorithm> {
        match self {
            Algorithm::Linear(l) => Arc::new(lift_linear(l)),
            Algorithm::General(g) => Arc::clone(g),
        }
    }

    pub fn run_noiseless(&self, x: &Bits) -> u64 {
        match self {
            Algorithm::Linear(l) => l.eval(x),
            Algorithm::General(g) => run_noiseless(g.as_ref(), x),
        }
    }
}

pub fn build_algorithm(id: AlgorithmId, n: usize, inputs: &AlgorithmInputs) -> Result<Algorithm, StreamError> {
    Ok(match id {
        AlgorithmId::Parity => Algorithm::Linear(parity(n)),
        AlgorithmId::Dot => {
            let y = inputs.y.as_ref().ok_or(StreamError::Missing("dot", "y"))?;
            if y.len() != n as u64 {
                return Err(StreamError::Config(format!("y has {} bits, n = {n}", y.len())));
            }
            Algorithm::Linear(dot(y))
        }
        AlgorithmId::Sum => Algorithm::Linear(weighted_sum(n, inputs.modulus.unwrap_or(DEFAULT_SUM_MODULUS))?),
        AlgorithmId::Count => Algorithm::Linear(bit_count(n)),
        AlgorithmId::Index => {
            let width = IndexAlgorithm::default_width(n)
                .ok_or_else(|| StreamError::Config(format!("no index pair width tiles n = {n}")))?;
            let target = inputs.target.ok_or(StreamError::Missing("index", "target"))?;
            Algorithm::General(Arc::new(IndexAlgorithm::new(width, target)?))
        }
        AlgorithmId::Dfa => Algorithm::General(Arc::new(Dfa4)),
    })
}

/// Random-access bit source behind a [`BitStream`].
pub trait StreamSource: Send + Sync {
    fn len(&self) -> u64;

    /// Up to 64 bits at `start`, bit `start` in bit 0.
    fn bits_at(&self, start: u64, width: u32) -> u64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl StreamSource for Bits {
    fn len(&self) -> u64 {
        Bits::len(self)
    }

    fn bits_at(&self, start: u64, width: u32) -> u64 {
        self.word_at(start, width)
    }
}

/// `copy` repeated back to back, truncated to `len` bits.
#[derive(Debug, Clone)]
pub struct RepeatedSource {
    copy: Bits,
    len: u64,
}

impl RepeatedSource {
    pub fn new(copy: Bits, copies: u64) -> Self {
        let len = copy.len() * copies;
        Self { copy, len }
    }

    pub fn copy(&self) -> &Bits {
        &self.copy
    }
}

impl StreamSource for RepeatedSource {
    fn len(&self) -> u64 {
        self.len
    }

    fn bits_at(&self, start: u64, width: u32) -> u64 {
        debug_assert!(start + u64::from(width) <= self.len);
        let n = self.copy.len();
        let off = start % n;
        if off + u64::from(width) <= n {
            self.copy.word_at(off, width)
        } else {
            let first = (n - off) as u32;
            self.copy.word_at(off, first) | (self.bits_at(start + u64::from(first), width - first) << first)
        }
    }
}

/// A source with a corruption pattern applied on the fly.
pub struct CorruptedSource<S> {
    inner: S,
    pattern: Arc<CorruptionPattern>,
}

impl<S: StreamSource> CorruptedSource<S> {
    pub fn new(inner: S, pattern: Arc<CorruptionPattern>) -> Result<Self, StreamError> {
        if inner.len() != pattern.len() {
            return Err(StreamError::Config(format!(
                "pattern covers {} bits, stream has {}",
                pattern.len(),
                inner.len()
            )));
        }
        Ok(Self { inner, pattern })
    }
}

impl<S: StreamSource> StreamSource for CorruptedSource<S> {
    fn len(&self) -> u64 {
        self.inner.len()
    }

    fn bits_at(&self, start: u64, width: u32) -> u64 {
        self.inner.bits_at(start, width) ^ self.pattern.mask_at(start, width)
    }
}

/// Counters kept by every stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub bits_read: u64,
    pub reads: u64,
    /// Bits actually handed to the caller (as opposed to passed over).
    pub bits_collected: u64,
    /// Largest number of bits handed out by one read.
    pub peak_collected: u64,
}

/// One-pass reader. Every read consumes the next bits of the stream; the
/// cursor never moves back.
pub struct BitStream<'a> {
    src: Box<dyn StreamSource + 'a>,
    cursor: u64,
    stats: StreamStats,
    spans: Option<Vec<(u64, u64)>>,
}

impl<'a> BitStream<'a> {
    pub fn new(src: impl StreamSource + 'a) -> Self {
        Self { src: Box::new(src), cursor: 0, stats: StreamStats::default(), spans: None }
    }

    /// Records every consumed range for later inspection.
    pub fn instrumented(src: impl StreamSource + 'a) -> Self {
        let mut s = Self::new(src);
        s.spans = Some(Vec::new());
        s
    }

    pub fn len(&self) -> u64 {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.len() == 0
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn remaining(&self) -> u64 {
        self.src.len() - self.cursor
    }

    pub fn stats(&self) -> &StreamStats {
        &self.stats
    }

    /// Consumed ranges `[start, end)` in order, when instrumented.
    pub fn spans(&self) -> Option<&[(u64, u64)]> {
        self.spans.as_deref()
    }

    fn consume(&mut self, count: u64, collected: u64) -> Result<u64, StreamError> {
        if count > self.remaining() {
            return Err(StreamError::Underrun { requested: count, remaining: self.remaining() });
        }
        let start = self.cursor;
        self.cursor += count;
        self.stats.bits_read += count;
        self.stats.reads += 1;
        self.stats.bits_collected += collected;
        self.stats.peak_collected = self.stats.peak_collected.max(collected);
        if let Some(sp) = &mut self.spans {
            sp.push((start, self.cursor));
        }
        Ok(start)
    }

    /// The next `count` bits.
    pub fn read(&mut self, count: u64) -> Result<Bits, StreamError> {
        let start = self.consume(count, count)?;
        let mut out = Bits::zeros(0);
        let mut p = start;
        while p < start + count {
            let w = (start + count - p).min(64) as u32;
            out.push_word(self.src.bits_at(p, w), w);
            p += u64::from(w);
        }
        Ok(out)
    }

    /// Consumes the next `span` bits, keeping only the `width`-bit blocks at
    /// the given offsets into the span.
    pub fn read_blocks(&mut self, span: u64, offsets: &[u64], width: u32, out: &mut Vec<u64>) -> Result<(), StreamError> {
        let w = u64::from(width);
        if width > 64 || offsets.windows(2).any(|p| p[0] + w > p[1]) || offsets.last().is_some_and(|&o| o + w > span) {
            return Err(StreamError::Offsets);
        }
        let start = self.consume(span, offsets.len() as u64 * w)?;
        out.clear();
        out.extend(offsets.iter().map(|&o| self.src.bits_at(start + o, width)));
        Ok(())
    }
}
