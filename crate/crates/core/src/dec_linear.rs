//! One-pass decoder for linear streaming algorithms.
//!
//! `estA(i, j)` reads `(r * ell)^(log_r(j - i))` codeword copies. A leaf
//! locally decodes `x_j` from one copy; an internal call splits its
//! interval into `r` parts and, for each of `ell` chunks, visits the parts
//! in a fresh random order, folding each estimate into a per-part guess by
//! confidence-weighted majority.

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::enc::{copies_consumed, EncError, Mode, StreamParams};
use crate::rm_ldc::{decode_planned_bit, plan_queries_into, LdcError, LdcScratch, PlanScratch, QueryPlan};
use crate::stream_model::{BitStream, LinearStreamingAlgorithm, StreamError};

/// Exact confidence.
pub type Conf = Ratio<i64>;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Enc(#[from] EncError),
    #[error(transparent)]
    Ldc(#[from] LdcError),
    #[error("estimate ({i}, {j}] consumed {got} bits, expected {expected}")]
    Alignment { i: usize, j: usize, got: u64, expected: u64 },
    #[error("stream cursor {0} is not at a copy boundary")]
    Boundary(u64),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(Conf),
    #[error("{0}")]
    Usage(String),
}

/// A guess and its accumulated confidence; `value == None` is the unset
/// starting point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuessConf {
    pub value: Option<u64>,
    pub conf: Conf,
}

impl Default for GuessConf {
    fn default() -> Self {
        Self::unset()
    }
}

impl GuessConf {
    pub fn unset() -> Self {
        Self { value: None, conf: Conf::zero() }
    }

    pub fn new(value: u64, conf: Conf) -> Self {
        Self { value: Some(value), conf }
    }
}

/// Adds `c_hat` when `q_hat` agrees (or nothing is set yet), subtracts it
/// otherwise and switches to `q_hat` once the total drops below zero.
pub fn weighted_update(gc: GuessConf, q_hat: u64, c_hat: Conf) -> Result<GuessConf, DecodeError> {
    if c_hat.is_negative() || c_hat > Conf::from_integer(1) {
        return Err(DecodeError::Confidence(c_hat));
    }
    Ok(match gc.value {
        None => GuessConf::new(q_hat, gc.conf + c_hat),
        Some(v) if v == q_hat => GuessConf::new(v, gc.conf + c_hat),
        Some(v) => {
            let c = gc.conf - c_hat;
            if c.is_negative() {
                GuessConf::new(q_hat, -c)
            } else {
                GuessConf::new(v, c)
            }
        }
    })
}

/// Tracked registers (64-bit words) currently held and the peak.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpaceMeter {
    current: u64,
    peak: u64,
}

impl SpaceMeter {
    pub fn alloc(&mut self, regs: u64) {
        self.current += regs;
        self.peak = self.peak.max(self.current);
    }

    pub fn free(&mut self, regs: u64) {
        debug_assert!(self.current >= regs, "space meter underflow");
        self.current -= regs;
    }

    pub fn current(&self) -> u64 {
        self.current
    }

    pub fn peak(&self) -> u64 {
        self.peak
    }
}

fn regs_for_bits(bits: u64) -> u64 {
    bits.div_ceil(64)
}

/// Register accounting for one decode configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceLayout {
    pub r: u64,
    /// Registers per algorithm value or state.
    pub s_regs: u64,
    pub mode: Mode,
    /// Fixed leaf footprint: curve directions, query offsets, slot map and
    /// collected bits, all at their worst-case capacity.
    pub leaf_regs: u64,
}

/// Registers per confidence: numerator and denominator.
pub const CONF_REGS: u64 = 2;
/// Per-frame counters: interval bounds, chunk index, section index.
pub const FRAME_COUNTERS: u64 = 4;

impl SpaceLayout {
    pub fn new(sp: &StreamParams, state_bits: u32, mode: Mode) -> Self {
        let ldc = sp.ldc();
        let k = u64::from(ldc.k());
        let queries = ldc.queries_per_decode();
        let dirs = regs_for_bits(k * 2 * u64::from(ldc.nvars()) * u64::from(ldc.w()));
        let slot_bits = u64::from(64 - queries.leading_zeros());
        let slot_map = regs_for_bits(queries * slot_bits);
        let collected = regs_for_bits(queries * u64::from(ldc.n_inner()));
        Self { r: sp.r(), s_regs: regs_for_bits(u64::from(state_bits)).max(1), mode, leaf_regs: dirs + queries + slot_map + collected }
    }

    pub fn slot_regs(&self) -> u64 {
        self.s_regs + CONF_REGS
    }

    /// One internal frame: counters, permutation, live slots and, in
    /// general mode, the chunk-start snapshots.
    pub fn frame_regs(&self) -> u64 {
        let copies = match self.mode {
            Mode::Linear => 1,
            Mode::General => 2,
        };
        FRAME_COUNTERS + self.r + copies * self.r * self.slot_regs()
    }

    /// Per-part bookkeeping beyond the state itself, `ceil((frame - r s) / r)`.
    pub fn c_log(&self) -> u64 {
        (self.frame_regs() - self.r * self.s_regs).div_ceil(self.r)
    }

    /// Amplification accumulator plus its iteration counter.
    pub fn top_regs(&self) -> u64 {
        self.slot_regs() + 1
    }
}

/// Checks that every confidence emitted at level `t` has a denominator
/// dividing `ell^t * 4 k (q - 1) N_inner`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfAudit {
    base: i64,
    ell: i64,
    pub checked: u64,
    pub violations: u64,
}

impl ConfAudit {
    pub fn new(sp: &StreamParams) -> Self {
        Self { base: sp.ldc().conf_denominator(), ell: sp.ell() as i64, checked: 0, violations: 0 }
    }

    pub fn bound(&self, level: u32) -> i64 {
        self.ell.pow(level) * self.base
    }

    pub fn record(&mut self, level: u32, c: Conf) {
        self.checked += 1;
        if self.bound(level) % c.denom() != 0 {
            self.violations += 1;
        }
    }
}

/// Reusable buffers for leaf decodes.
#[derive(Debug, Default)]
pub(crate) struct LeafDecoder {
    plan: QueryPlan,
    plan_scratch: PlanScratch,
    ldc_scratch: LdcScratch,
    offsets: Vec<u64>,
    blocks: Vec<u64>,
}

impl LeafDecoder {
    /// Decodes `x_j` (1-based) from the next codeword copy of `bs`.
    pub(crate) fn decode_next<R: Rng + ?Sized>(
        &mut self,
        j: usize,
        bs: &mut BitStream<'_>,
        sp: &StreamParams,
        rng: &mut R,
    ) -> Result<(bool, Conf), DecodeError> {
        let ldc = sp.ldc();
        plan_queries_into(j, ldc, rng, &mut self.plan, &mut self.plan_scratch)?;
        let nb = ldc.n_inner();
        self.offsets.clear();
        self.offsets.extend(self.plan.symbols().iter().map(|&s| s * u64::from(nb)));
        bs.read_blocks(ldc.codeword_bits(), &self.offsets, nb, &mut self.blocks)?;
        let (bit, conf) = decode_planned_bit(ldc, &self.plan, &self.blocks, &mut self.ldc_scratch);
        Ok((bit == 1, conf.value()))
    }
}

/// Shared state of one decode run.
pub(crate) struct DecodeCtx {
    pub(crate) leaf: LeafDecoder,
    pub(crate) meter: SpaceMeter,
    pub(crate) audit: ConfAudit,
    pub(crate) layout: SpaceLayout,
    pub(crate) leaves: u64,
}

impl DecodeCtx {
    pub(crate) fn new(sp: &StreamParams, state_bits: u32, mode: Mode) -> Self {
        Self {
            leaf: LeafDecoder::default(),
            meter: SpaceMeter::default(),
            audit: ConfAudit::new(sp),
            layout: SpaceLayout::new(sp, state_bits, mode),
            leaves: 0,
        }
    }

    pub(crate) fn leaf<R: Rng + ?Sized>(
        &mut self,
        j: usize,
        bs: &mut BitStream<'_>,
        sp: &StreamParams,
        rng: &mut R,
    ) -> Result<(bool, Conf), DecodeError> {
        self.meter.alloc(self.layout.leaf_regs);
        let out = self.leaf.decode_next(j, bs, sp, rng);
        self.meter.free(self.layout.leaf_regs);
        self.leaves += 1;
        out
    }
}

/// Level of an interval of length `len`: `log_r(len)`.
pub(crate) fn level_of(len: usize, r: u64) -> u32 {
    let mut l = 0;
    let mut p = 1usize;
    while p < len {
        p *= r as usize;
        l += 1;
    }
    l
}

pub(crate) fn check_entry(i: usize, j: usize, bs: &BitStream<'_>, sp: &StreamParams) -> Result<u64, DecodeError> {
    let expected = copies_consumed(i, j, sp)? * sp.copy_bits();
    if !bs.cursor().is_multiple_of(sp.copy_bits()) {
        return Err(DecodeError::Boundary(bs.cursor()));
    }
    if bs.remaining() < expected {
        return Err(StreamError::Underrun { requested: expected, remaining: bs.remaining() }.into());
    }
    Ok(expected)
}

pub(crate) fn check_exit(i: usize, j: usize, start: u64, expected: u64, bs: &BitStream<'_>) -> Result<(), DecodeError> {
    let got = bs.cursor() - start;
    if got != expected {
        return Err(DecodeError::Alignment { i, j, got, expected });
    }
    Ok(())
}

pub(crate) fn random_permutation<R: Rng + ?Sized>(r: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (1..=r).collect();
    p.shuffle(rng);
    p
}

fn est_linear<R: Rng + ?Sized>(
    ctx: &mut DecodeCtx,
    i: usize,
    j: usize,
    bs: &mut BitStream<'_>,
    l: &LinearStreamingAlgorithm,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<(u64, Conf), DecodeError> {
    let expected = check_entry(i, j, bs, sp)?;
    let start = bs.cursor();
    let out = if j == i + 1 {
        let (b, c) = ctx.leaf(j, bs, sp, rng)?;
        (l.g(j, b), c)
    } else {
        let r = sp.r() as usize;
        let sub = (j - i) / r;
        let frame = ctx.layout.frame_regs();
        ctx.meter.alloc(frame);
        let mut slots = vec![GuessConf::unset(); r];
        for _ in 0..sp.ell() {
            let perm = random_permutation(r, rng);
            for &pa in &perm {
                let (q, c) = est_linear(ctx, i + (pa - 1) * sub, i + pa * sub, bs, l, sp, rng)?;
                slots[pa - 1] = weighted_update(slots[pa - 1], q, c)?;
            }
        }
        ctx.meter.free(frame);
        let value = slots.iter().fold(l.zero(), |acc, s| l.add(acc, s.value.unwrap_or(l.zero())));
        let min = slots.iter().map(|s| s.conf).min().unwrap_or_else(Conf::zero);
        (value, min / Conf::from_integer(sp.ell() as i64))
    };
    ctx.audit.record(level_of(j - i, sp.r()), out.1);
    check_exit(i, j, start, expected, bs)?;
    Ok(out)
}

/// `estA(i, j)` on its own: reads exactly `copies_consumed(i, j)` copies.
pub fn est_a_linear<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    bs: &mut BitStream<'_>,
    l: &LinearStreamingAlgorithm,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<(u64, Conf), DecodeError> {
    let mut ctx = DecodeCtx::new(sp, l.field_bits(), Mode::Linear);
    est_linear(&mut ctx, i, j, bs, l, sp, rng)
}

/// One `estA` call with its register peak.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalProbe {
    pub value: u64,
    pub conf: Conf,
    pub peak_registers: u64,
    pub layout: SpaceLayout,
}

/// [`est_a_linear`] plus space accounting.
pub fn est_a_linear_metered<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    bs: &mut BitStream<'_>,
    l: &LinearStreamingAlgorithm,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<IntervalProbe, DecodeError> {
    let mut ctx = DecodeCtx::new(sp, l.field_bits(), Mode::Linear);
    let (value, conf) = est_linear(&mut ctx, i, j, bs, l, sp, rng)?;
    Ok(IntervalProbe { value, conf, peak_registers: ctx.meter.peak(), layout: ctx.layout })
}

/// Result of a full decode run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeReport {
    pub value: u64,
    pub conf: Conf,
    /// The `T` top-level estimates in order.
    pub estimates: Vec<(u64, Conf)>,
    pub bits_read: u64,
    pub peak_registers: u64,
    pub peak_collected_bits: u64,
    pub leaves: u64,
    pub audit: ConfAudit,
    pub layout: SpaceLayout,
}

pub(crate) fn finish(
    ctx: DecodeCtx,
    acc: GuessConf,
    value: u64,
    estimates: Vec<(u64, Conf)>,
    bs: &BitStream<'_>,
) -> DecodeReport {
    DecodeReport {
        value,
        conf: acc.conf,
        estimates,
        bits_read: bs.stats().bits_read,
        peak_registers: ctx.meter.peak(),
        peak_collected_bits: bs.stats().peak_collected,
        leaves: ctx.leaves,
        audit: ctx.audit,
        layout: ctx.layout,
    }
}

/// `T` full-interval estimates merged by weighted majority.
pub fn run_linear<R: Rng + ?Sized>(
    l: &LinearStreamingAlgorithm,
    bs: &mut BitStream<'_>,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<DecodeReport, DecodeError> {
    if l.n() != sp.n() {
        return Err(DecodeError::Usage(format!("algorithm takes {} bits, stream encodes {}", l.n(), sp.n())));
    }
    let mut ctx = DecodeCtx::new(sp, l.field_bits(), Mode::Linear);
    ctx.meter.alloc(ctx.layout.top_regs());
    let mut acc = GuessConf::unset();
    let mut estimates = Vec::with_capacity(sp.t() as usize);
    for _ in 0..sp.t() {
        let (q, c) = est_linear(&mut ctx, 0, sp.n(), bs, l, sp, rng)?;
        estimates.push((q, c));
        acc = weighted_update(acc, q, c)?;
    }
    ctx.meter.free(ctx.layout.top_regs());
    let value = acc.value.unwrap_or(l.zero());
    Ok(finish(ctx, acc, value, estimates, bs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use crate::channel::{make_pattern, ChannelKind, PatternDescriptor, PatternExtras};
    use crate::enc::encode_source;
    use crate::rm_ldc::LdcOverrides;
    use crate::stream_model::{dot, parity, CorruptedSource, StreamSource};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn r(a: i64, b: i64) -> Conf {
        Conf::new(a, b)
    }

    fn small(n: usize, r: u64, ell: u64, t: u64) -> StreamParams {
        StreamParams::build(n, r, ell, t, Mode::Linear, Ratio::new(1, 2), &LdcOverrides::desk()).unwrap()
    }

    #[test]
    fn update_examples() {
        let a = weighted_update(GuessConf::unset(), 7, r(1, 4)).unwrap();
        assert_eq!(a, GuessConf::new(7, r(1, 4)));
        let b = weighted_update(GuessConf::new(1, r(1, 3)), 2, r(1, 2)).unwrap();
        assert_eq!(b, GuessConf::new(2, r(1, 6)));
        let c = weighted_update(GuessConf::new(1, r(1, 4)), 2, r(1, 4)).unwrap();
        assert_eq!(c, GuessConf::new(1, r(0, 1)));
        assert!(weighted_update(c, 1, r(-1, 4)).is_err());
        assert!(weighted_update(c, 1, r(5, 4)).is_err());
    }

    #[test]
    fn update_is_signed_sum() {
        // Folding any sequence tracks the signed total toward the final value.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let seq: Vec<(u64, Conf)> = (0..8).map(|_| (rng.random_range(0..2), r(rng.random_range(0..5), 4))).collect();
            let mut g = GuessConf::unset();
            for &(q, c) in &seq {
                g = weighted_update(g, q, c).unwrap();
            }
            let v = g.value.unwrap();
            let signed: Conf = seq.iter().map(|&(q, c)| if q == v { c } else { -c }).sum();
            assert_eq!(signed, g.conf);
            assert!(!g.conf.is_negative());
        }
    }

    #[test]
    fn clean_estimates_are_exact() {
        let sp = small(16, 4, 2, 1);
        let x = Bits::from_bit_str("1011001110001101").unwrap();
        let y = Bits::from_bit_str("1101011000110101").unwrap();
        let l = dot(&y);
        let src = encode_source(&x, &sp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (i, j) in [(0usize, 1usize), (3, 4), (4, 8), (0, 16)] {
            let mut bs = BitStream::new(src.clone());
            let (v, c) = est_a_linear(i, j, &mut bs, &l, &sp, &mut rng).unwrap();
            assert_eq!(v, l.partial_sum(i, j, &x), "({i}, {j}]");
            assert_eq!(c, r(1, 4));
            assert_eq!(bs.cursor(), copies_consumed(i, j, &sp).unwrap() * sp.copy_bits());
        }
    }

    #[test]
    fn run_reads_whole_stream_once() {
        let sp = small(4, 4, 2, 2);
        let x = Bits::from_bit_str("0111").unwrap();
        let mut bs = BitStream::instrumented(encode_source(&x, &sp).unwrap());
        let rep = run_linear(&parity(4), &mut bs, &sp, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(rep.value, 1);
        assert_eq!(rep.conf, r(1, 2));
        assert_eq!(rep.bits_read, sp.m_len());
        let spans = bs.spans().unwrap();
        assert!(spans.windows(2).all(|w| w[0].1 == w[1].0));
        assert_eq!(spans.last().unwrap().1, sp.m_len());
        assert_eq!(rep.audit.violations, 0);
        assert_eq!(rep.leaves, 2 * 8);
        assert!(rep.peak_collected_bits < sp.copy_bits());
        assert!(run_linear(&parity(5), &mut bs, &sp, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }

    #[test]
    fn underrun_is_an_error() {
        let sp = small(4, 4, 2, 2);
        let src = encode_source(&Bits::zeros(4), &sp).unwrap();
        let mut bs = BitStream::new(src);
        bs.read(sp.copy_bits()).unwrap();
        let e = run_linear(&parity(4), &mut bs, &sp, &mut ChaCha8Rng::seed_from_u64(2)).unwrap_err();
        assert!(matches!(e, DecodeError::Stream(StreamError::Underrun { .. })));
    }

    /// Replaces every bit of the listed copies with fresh coin flips.
    struct GarbledCopies<S> {
        inner: S,
        copy_bits: u64,
        noise: std::collections::HashMap<u64, Bits>,
    }

    impl<S: StreamSource> StreamSource for GarbledCopies<S> {
        fn len(&self) -> u64 {
            self.inner.len()
        }

        fn bits_at(&self, start: u64, width: u32) -> u64 {
            let clean = self.inner.bits_at(start, width);
            let c = start / self.copy_bits;
            debug_assert_eq!(c, (start + u64::from(width) - 1) / self.copy_bits);
            match self.noise.get(&c) {
                Some(n) => clean ^ n.word_at(start % self.copy_bits, width),
                None => clean,
            }
        }
    }

    #[test]
    fn one_attacked_section_per_chunk() {
        // D = 1: in every chunk the copy read by one fixed section is garbage.
        let sp = small(4, 4, 16, 1);
        let x = Bits::from_bit_str("1101").unwrap();
        let l = parity(4);
        let mut ok = 0;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let noise = (0..16)
                .map(|c| {
                    let bools: Vec<bool> = (0..sp.copy_bits()).map(|_| rng.random()).collect();
                    (c * 4 + trial % 4, Bits::from_bools(&bools))
                })
                .collect();
            let src = GarbledCopies { inner: encode_source(&x, &sp).unwrap(), copy_bits: sp.copy_bits(), noise };
            let mut bs = BitStream::new(src);
            let rep = run_linear(&l, &mut bs, &sp, &mut ChaCha8Rng::seed_from_u64(1000 + trial)).unwrap();
            ok += usize::from(rep.value == l.eval(&x));
        }
        assert!(ok >= 95, "{ok}/100");
    }

    #[test]
    fn flipped_copy_decodes_to_complement() {
        // The inner code is closed under complement, so a fully flipped copy
        // is a clean copy of the complemented message bit.
        let sp = small(4, 4, 1, 1);
        let x = Bits::from_bit_str("1001").unwrap();
        let mut extras = PatternExtras::layout(sp.copy_bits(), sp.ldc().n_inner());
        extras.copies = vec![0];
        let pat = make_pattern(PatternDescriptor {
            kind: ChannelKind::CopyTargeted,
            seed: 0,
            rho: Ratio::new(1, 4),
            m_len: sp.m_len(),
            eps_budget: None,
            extras,
        })
        .unwrap();
        let src = CorruptedSource::new(encode_source(&x, &sp).unwrap(), Arc::new(pat)).unwrap();
        let mut bs = BitStream::new(src);
        let (b, c) = est_a_linear(0, 1, &mut bs, &parity(4), &sp, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!((b, c), (0, r(1, 4)));
    }

    #[test]
    fn layout_frame_matches_definition() {
        let sp = small(16, 4, 16, 4);
        let lay = SpaceLayout::new(&sp, 1, Mode::Linear);
        assert_eq!(lay.s_regs, 1);
        assert_eq!(lay.frame_regs(), 4 + 4 + 4 * 3);
        assert!(lay.frame_regs() <= lay.r * (lay.s_regs + lay.c_log()));
        let g = SpaceLayout::new(&sp, 5, Mode::General);
        assert_eq!(g.frame_regs(), 4 + 4 + 2 * 4 * 3);
    }
}
