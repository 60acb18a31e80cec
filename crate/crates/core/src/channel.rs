//! Corruption patterns over the encoded stream.
//!
//! Patterns are evaluated lazily, one 64-bit word at a time, so a pattern
//! over billions of bits costs nothing until the decoder reads from it.
//! Bit `p` of the stream lives at bit `p % 64` of word `p / 64`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_rational::Ratio;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bits::Bits;

/// Tail bound (natural log) under which a random pattern is trusted to be
/// within budget without a full scan.
const SKIP_SCAN_LOG_BOUND: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("rho {rho} exceeds the corruption budget 1/4 - {eps} = {limit}")]
    Budget { rho: Ratio<u64>, eps: Ratio<u64>, limit: Ratio<u64> },
    #[error("pattern flips {count} bits, budget allows {limit}")]
    WeightOverBudget { count: u64, limit: u64 },
    #[error("rho must lie in [0, 1], got {0}")]
    Rho(Ratio<u64>),
    #[error("pattern needs {0}")]
    Missing(&'static str),
    #[error("position {pos} outside stream of {len} bits")]
    Position { pos: u64, len: u64 },
    #[error("word of {got} bits, pattern covers {expected}")]
    LengthMismatch { got: u64, expected: u64 },
    #[error("pattern file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Random,
    PrefixBurst,
    Periodic,
    CopyTargeted,
    SymbolTargeted,
    Explicit,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 6] = [
        ChannelKind::Random,
        ChannelKind::PrefixBurst,
        ChannelKind::Periodic,
        ChannelKind::CopyTargeted,
        ChannelKind::SymbolTargeted,
        ChannelKind::Explicit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Random => "random",
            ChannelKind::PrefixBurst => "prefix_burst",
            ChannelKind::Periodic => "periodic",
            ChannelKind::CopyTargeted => "copy_targeted",
            ChannelKind::SymbolTargeted => "symbol_targeted",
            ChannelKind::Explicit => "explicit",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ChannelError::Format(format!("unknown channel kind `{s}`")))
    }
}

/// Kind-specific inputs. `copy_bits` and `n_inner` describe the stream
/// layout for the targeted kinds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternExtras {
    pub copy_bits: u64,
    pub n_inner: u32,
    /// Copies to corrupt; drawn from the seed when empty.
    pub copies: Vec<u64>,
    /// Outer symbols to corrupt in every copy; drawn from the seed when empty.
    pub symbols: Vec<u64>,
    pub flips: Vec<u64>,
}

impl PatternExtras {
    pub fn layout(copy_bits: u64, n_inner: u32) -> Self {
        Self { copy_bits, n_inner, ..Default::default() }
    }
}

/// Everything needed to regenerate a pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternDescriptor {
    pub kind: ChannelKind,
    pub seed: u64,
    pub rho: Ratio<u64>,
    pub m_len: u64,
    /// `Some(eps)` enforces at most `floor((1/4 - eps) * m_len)` flips.
    pub eps_budget: Option<Ratio<u64>>,
    pub extras: PatternExtras,
}

#[derive(Debug, Clone)]
enum Shape {
    Empty,
    Intervals(Vec<(u64, u64)>),
    Periodic { period: u64 },
    Symbols { copy_bits: u64, n_inner: u64, symbols: Vec<u64> },
    Random { key: u64, threshold: u64, all: bool, dropped: Vec<u64> },
    Explicit(Vec<u64>),
}

#[derive(Debug, Clone)]
pub struct CorruptionPattern {
    desc: PatternDescriptor,
    shape: Shape,
    count: OnceLock<u64>,
}

/// `floor((1/4 - eps) * m)`.
pub fn budget_limit(m_len: u64, eps: Ratio<u64>) -> Result<u64, ChannelError> {
    let quarter = Ratio::new(1u64, 4);
    if eps > quarter {
        return Ok(0);
    }
    let f = quarter - eps;
    Ok((u128::from(m_len) * u128::from(*f.numer()) / u128::from(*f.denom())) as u64)
}

fn floor_mul(m: u64, r: Ratio<u64>) -> u64 {
    (u128::from(m) * u128::from(*r.numer()) / u128::from(*r.denom())) as u64
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64 independent Bernoulli lanes: bit `b` is set iff a uniform 64-bit
/// value drawn for lane `b` is below `threshold`. Planes are compared MSB
/// first and the loop stops once every lane in `lanes` is decided; other
/// lanes come back cleared.
#[inline]
fn bernoulli_word(key: u64, idx: u64, threshold: u64, lanes: u64) -> u64 {
    let base = mix64(idx ^ key);
    let mut undecided = lanes;
    let mut less = 0u64;
    for k in 0..64u64 {
        let r = mix64(base.wrapping_add((k + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        if (threshold >> (63 - k)) & 1 == 1 {
            less |= undecided & !r;
            undecided &= r;
        } else {
            undecided &= !r;
        }
        if undecided == 0 {
            break;
        }
    }
    less
}

impl CorruptionPattern {
    pub fn descriptor(&self) -> &PatternDescriptor {
        &self.desc
    }

    pub fn kind(&self) -> ChannelKind {
        self.desc.kind
    }

    pub fn len(&self) -> u64 {
        self.desc.m_len
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    fn tail_mask(&self, idx: u64) -> u64 {
        let m = self.desc.m_len;
        let start = idx * 64;
        if start >= m {
            0
        } else if m - start >= 64 {
            u64::MAX
        } else {
            (1u64 << (m - start)) - 1
        }
    }

    /// Flip mask for stream bits `64 * idx .. 64 * idx + 64`.
    pub fn mask_word(&self, idx: u64) -> u64 {
        self.mask_lanes(idx, u64::MAX)
    }

    /// `mask_word(idx) & lanes`.
    fn mask_lanes(&self, idx: u64, lanes: u64) -> u64 {
        let valid = self.tail_mask(idx) & lanes;
        if valid == 0 {
            return 0;
        }
        let lo = idx * 64;
        let hi = lo + 64;
        let raw = match &self.shape {
            Shape::Empty => 0,
            Shape::Intervals(iv) => {
                let mut m = 0u64;
                let first = iv.partition_point(|&(_, e)| e <= lo);
                for &(s, e) in &iv[first..] {
                    if s >= hi {
                        break;
                    }
                    let a = s.max(lo) - lo;
                    let b = e.min(hi) - lo;
                    m |= range_mask(a as u32, b as u32);
                }
                m
            }
            Shape::Periodic { period } => {
                let p = *period;
                let mut off = (p - 1 + p - lo % p) % p;
                let mut m = 0u64;
                while off < 64 {
                    m |= 1 << off;
                    off += p;
                }
                m
            }
            Shape::Symbols { copy_bits, n_inner, symbols } => {
                let mut m = 0u64;
                let mut p = lo;
                while p < hi {
                    let in_copy = p % copy_bits;
                    let sym = in_copy / n_inner;
                    let end = (p - in_copy % n_inner + n_inner).min(hi);
                    if symbols.binary_search(&sym).is_ok() {
                        m |= range_mask((p - lo) as u32, (end - lo) as u32);
                    }
                    p = end;
                }
                m
            }
            Shape::Random { key, threshold, all, dropped } => {
                let mut m = if *all { u64::MAX } else { bernoulli_word(*key, idx, *threshold, valid) };
                if !dropped.is_empty() {
                    let first = dropped.partition_point(|&p| p < lo);
                    for &p in dropped[first..].iter().take_while(|&&p| p < hi) {
                        m &= !(1 << (p - lo));
                    }
                }
                m
            }
            Shape::Explicit(f) => {
                let first = f.partition_point(|&p| p < lo);
                f[first..].iter().take_while(|&&p| p < hi).fold(0u64, |m, &p| m | 1 << (p - lo))
            }
        };
        raw & valid
    }

    /// Flip mask for `width <= 64` bits starting at `start`.
    #[inline]
    pub fn mask_at(&self, start: u64, width: u32) -> u64 {
        if width == 0 {
            return 0;
        }
        let wi = start / 64;
        let off = (start % 64) as u32;
        let ones = if width < 64 { (1u64 << width) - 1 } else { u64::MAX };
        let mut v = self.mask_lanes(wi, ones << off) >> off;
        if off != 0 && off + width > 64 {
            v |= self.mask_lanes(wi + 1, ones >> (64 - off)) << (64 - off);
        }
        v
    }

    pub fn contains(&self, p: u64) -> bool {
        p < self.desc.m_len && (self.mask_word(p / 64) >> (p % 64)) & 1 == 1
    }

    /// Number of flipped positions, computed once.
    pub fn count(&self) -> u64 {
        *self.count.get_or_init(|| self.compute_count())
    }

    fn compute_count(&self) -> u64 {
        let m = self.desc.m_len;
        match &self.shape {
            Shape::Empty => 0,
            Shape::Intervals(iv) => iv.iter().map(|&(s, e)| e.min(m).saturating_sub(s)).sum(),
            Shape::Periodic { period } => m / period,
            Shape::Symbols { copy_bits, n_inner, symbols } => {
                let full = m / copy_bits;
                let rem = m % copy_bits;
                let partial: u64 = symbols.iter().map(|&s| rem.saturating_sub(s * n_inner).min(*n_inner)).sum();
                full * symbols.len() as u64 * n_inner + partial
            }
            Shape::Random { .. } => self.scan_count(),
            Shape::Explicit(f) => f.len() as u64,
        }
    }

    fn scan_count(&self) -> u64 {
        (0..self.desc.m_len.div_ceil(64)).map(|i| u64::from(self.mask_word(i).count_ones())).sum()
    }

    /// `|flips| / length`, exact.
    pub fn weight_fraction(&self) -> Ratio<u64> {
        if self.desc.m_len == 0 {
            return Ratio::from_integer(0);
        }
        Ratio::new(self.count(), self.desc.m_len)
    }

    /// All flipped positions in ascending order.
    pub fn flips(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.desc.m_len.div_ceil(64)).flat_map(move |i| {
            let mut w = self.mask_word(i);
            std::iter::from_fn(move || {
                (w != 0).then(|| {
                    let b = w.trailing_zeros();
                    w &= w - 1;
                    i * 64 + u64::from(b)
                })
            })
        })
    }
}

fn range_mask(a: u32, b: u32) -> u64 {
    debug_assert!(a <= b && b <= 64);
    let hi = if b == 64 { u64::MAX } else { (1u64 << b) - 1 };
    let lo = if a == 64 { u64::MAX } else { (1u64 << a) - 1 };
    hi & !lo
}

fn merge_intervals(mut iv: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    iv.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(iv.len());
    for (s, e) in iv {
        if s >= e {
            continue;
        }
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn threshold_of(rho: Ratio<u64>) -> (u64, bool) {
    if rho >= Ratio::from_integer(1) {
        return (u64::MAX, true);
    }
    let t = (u128::from(*rho.numer()) << 64) / u128::from(*rho.denom());
    (t as u64, false)
}

/// Builds the pattern described by `desc`.
pub fn make_pattern(desc: PatternDescriptor) -> Result<CorruptionPattern, ChannelError> {
    let rho = desc.rho;
    if *rho.denom() == 0 || rho > Ratio::from_integer(1) {
        return Err(ChannelError::Rho(rho));
    }
    let limit = match desc.eps_budget {
        Some(eps) => {
            let quarter = Ratio::new(1u64, 4);
            let lim = if eps > quarter { Ratio::from_integer(0) } else { quarter - eps };
            if rho > lim && desc.kind != ChannelKind::Explicit {
                return Err(ChannelError::Budget { rho, eps, limit: lim });
            }
            Some(budget_limit(desc.m_len, eps)?)
        }
        None => None,
    };
    let m = desc.m_len;
    let x = &desc.extras;
    let mut rng = ChaCha8Rng::seed_from_u64(desc.seed);
    let shape = if rho == Ratio::from_integer(0) && desc.kind != ChannelKind::Explicit {
        Shape::Empty
    } else {
        match desc.kind {
            ChannelKind::Random => {
                let (threshold, all) = threshold_of(rho);
                Shape::Random { key: rng.random(), threshold, all, dropped: Vec::new() }
            }
            ChannelKind::PrefixBurst => Shape::Intervals(vec![(0, floor_mul(m, rho))]),
            ChannelKind::Periodic => {
                let period = rho.recip().to_integer();
                Shape::Periodic { period: period.max(1) }
            }
            ChannelKind::CopyTargeted => {
                if x.copy_bits == 0 {
                    return Err(ChannelError::Missing("copy_bits"));
                }
                let total = m.div_ceil(x.copy_bits);
                let copies: Vec<u64> = if x.copies.is_empty() {
                    let want = floor_mul(m / x.copy_bits, rho) as usize;
                    sample(&mut rng, total as usize, want).into_iter().map(|c| c as u64).collect()
                } else {
                    x.copies.clone()
                };
                if let Some(&c) = copies.iter().find(|&&c| c >= total) {
                    return Err(ChannelError::Position { pos: c.saturating_mul(x.copy_bits), len: m });
                }
                Shape::Intervals(merge_intervals(
                    copies.iter().map(|&c| (c * x.copy_bits, ((c + 1) * x.copy_bits).min(m))).collect(),
                ))
            }
            ChannelKind::SymbolTargeted => {
                if x.copy_bits == 0 || x.n_inner == 0 || !x.copy_bits.is_multiple_of(u64::from(x.n_inner)) {
                    return Err(ChannelError::Missing("copy_bits as a multiple of n_inner"));
                }
                let n_outer = x.copy_bits / u64::from(x.n_inner);
                let mut symbols: Vec<u64> = if x.symbols.is_empty() {
                    let want = floor_mul(n_outer, rho) as usize;
                    sample(&mut rng, n_outer as usize, want).into_iter().map(|s| s as u64).collect()
                } else {
                    x.symbols.clone()
                };
                symbols.sort_unstable();
                symbols.dedup();
                if let Some(&s) = symbols.iter().find(|&&s| s >= n_outer) {
                    return Err(ChannelError::Position { pos: s * u64::from(x.n_inner), len: x.copy_bits });
                }
                Shape::Symbols { copy_bits: x.copy_bits, n_inner: u64::from(x.n_inner), symbols }
            }
            ChannelKind::Explicit => {
                let mut f = x.flips.clone();
                f.sort_unstable();
                f.dedup();
                if let Some(&p) = f.iter().find(|&&p| p >= m) {
                    return Err(ChannelError::Position { pos: p, len: m });
                }
                Shape::Explicit(f)
            }
        }
    };
    let mut pat = CorruptionPattern { desc, shape, count: OnceLock::new() };
    if let Some(limit) = limit {
        if let Shape::Random { threshold, all, .. } = pat.shape {
            if !all && within_budget_whp(m, threshold, limit) {
                return Ok(pat);
            }
            let count = pat.scan_count();
            if count > limit {
                let dropped = pick_drops(&pat, count, count - limit);
                if let Shape::Random { dropped: d, .. } = &mut pat.shape {
                    *d = dropped;
                }
                let _ = pat.count.set(limit);
            } else {
                let _ = pat.count.set(count);
            }
        } else if pat.count() > limit {
            return Err(ChannelError::WeightOverBudget { count: pat.count(), limit });
        }
    }
    Ok(pat)
}

/// Hoeffding: `P[count > limit] <= exp(-2 m t^2)` with `t = (limit + 1)/m - p`.
fn within_budget_whp(m: u64, threshold: u64, limit: u64) -> bool {
    if m == 0 {
        return true;
    }
    let p = threshold as f64 / 2f64.powi(64);
    let t = (limit as f64 + 1.0) / m as f64 - p;
    t > 0.0 && 2.0 * m as f64 * t * t > SKIP_SCAN_LOG_BOUND
}

/// Chooses `excess` flips to undo, uniformly among all flips: a uniform
/// subset of flip ranks is drawn and mapped to positions in one scan.
fn pick_drops(pat: &CorruptionPattern, total: u64, excess: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(pat.desc.seed ^ 0x7472_756e_6361_7465);
    let mut ranks: Vec<u64> = sample(&mut rng, total as usize, excess as usize).into_iter().map(|r| r as u64).collect();
    ranks.sort_unstable();
    let mut dropped = Vec::with_capacity(ranks.len());
    let mut seen = 0u64;
    let mut next = ranks.iter().peekable();
    for i in 0..pat.desc.m_len.div_ceil(64) {
        let Some(&&want) = next.peek() else { break };
        let mut w = pat.mask_word(i);
        let c = u64::from(w.count_ones());
        if want >= seen + c {
            seen += c;
            continue;
        }
        while w != 0 {
            let bit = w.trailing_zeros();
            w &= w - 1;
            if next.peek() == Some(&&seen) {
                dropped.push(i * 64 + u64::from(bit));
                next.next();
            }
            seen += 1;
        }
    }
    dropped
}

/// `z` with every position of `p` flipped.
pub fn apply_pattern(z: &Bits, p: &CorruptionPattern) -> Result<Bits, ChannelError> {
    if z.len() != p.len() {
        return Err(ChannelError::LengthMismatch { got: z.len(), expected: p.len() });
    }
    let words = z.words().iter().enumerate().map(|(i, &w)| w ^ p.mask_word(i as u64)).collect();
    Ok(Bits::from_words(words, z.len()))
}

pub fn pattern_weight_fraction(p: &CorruptionPattern) -> Ratio<u64> {
    p.weight_fraction()
}

const PATTERN_MAGIC: &str = "nrstream-pattern 1";

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(v: &str) -> Result<Vec<u64>, ChannelError> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| ChannelError::Format(format!("bad integer `{s}`"))))
        .collect()
}

fn parse_ratio(v: &str) -> Result<Ratio<u64>, ChannelError> {
    let bad = || ChannelError::Format(format!("bad ratio `{v}`"));
    let (n, d) = v.split_once('/').unwrap_or((v, "1"));
    let n: u64 = n.trim().parse().map_err(|_| bad())?;
    let d: u64 = d.trim().parse().map_err(|_| bad())?;
    if d == 0 {
        return Err(bad());
    }
    Ok(Ratio::new(n, d))
}

impl PatternDescriptor {
    /// Text form: a magic line then `key=value` lines. Flip lists are only
    /// written for explicit patterns.
    pub fn to_text(&self) -> String {
        let mut s = format!("{PATTERN_MAGIC}\n");
        s += &format!("kind={}\nseed={}\n", self.kind, self.seed);
        s += &format!("rho={}/{}\nm_len={}\n", self.rho.numer(), self.rho.denom(), self.m_len);
        if let Some(e) = self.eps_budget {
            s += &format!("eps_budget={}/{}\n", e.numer(), e.denom());
        }
        let x = &self.extras;
        s += &format!("copy_bits={}\nn_inner={}\n", x.copy_bits, x.n_inner);
        if !x.copies.is_empty() {
            s += &format!("copies={}\n", join(&x.copies));
        }
        if !x.symbols.is_empty() {
            s += &format!("symbols={}\n", join(&x.symbols));
        }
        if !x.flips.is_empty() {
            s += &format!("flips={}\n", join(&x.flips));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ChannelError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(PATTERN_MAGIC) {
            return Err(ChannelError::Format("missing pattern header".into()));
        }
        let mut d = PatternDescriptor {
            kind: ChannelKind::Explicit,
            seed: 0,
            rho: Ratio::from_integer(0),
            m_len: 0,
            eps_budget: None,
            extras: PatternExtras::default(),
        };
        let mut have_kind = false;
        let mut have_len = false;
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ChannelError::Format(format!("bad line `{line}`")))?;
            let num = |v: &str| v.trim().parse::<u64>().map_err(|_| ChannelError::Format(format!("bad value for {k}")));
            match k.trim() {
                "kind" => {
                    d.kind = v.trim().parse()?;
                    have_kind = true;
                }
                "seed" => d.seed = num(v)?,
                "rho" => d.rho = parse_ratio(v)?,
                "m_len" => {
                    d.m_len = num(v)?;
                    have_len = true;
                }
                "eps_budget" => d.eps_budget = Some(parse_ratio(v)?),
                "copy_bits" => d.extras.copy_bits = num(v)?,
                "n_inner" => {
                    d.extras.n_inner = u32::try_from(num(v)?).map_err(|_| ChannelError::Format("n_inner too large".into()))?
                }
                "copies" => d.extras.copies = parse_list(v)?,
                "symbols" => d.extras.symbols = parse_list(v)?,
                "flips" => d.extras.flips = parse_list(v)?,
                other => return Err(ChannelError::Format(format!("unknown key `{other}`"))),
            }
        }
        if !have_kind || !have_len {
            return Err(ChannelError::Format("kind and m_len are required".into()));
        }
        Ok(d)
    }
}
