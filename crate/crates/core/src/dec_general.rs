//! One-pass decoder for arbitrary sequential streaming algorithms.
//!
//! `estA(i, j, q)` estimates the state reached from `q` after reading
//! `x(i:j]`. Sections of a chunk start from the state guessed for the
//! preceding section at the start of the chunk, and every guess downstream
//! of a changed one is discarded once the chunk ends.

use num_traits::Zero;
use rand::Rng;

use crate::dec_linear::{
    check_entry, check_exit, finish, level_of, random_permutation, weighted_update, Conf, DecodeCtx, DecodeError,
    DecodeReport, GuessConf, IntervalProbe,
};
use crate::enc::{Mode, StreamParams};
use crate::stream_model::{BitStream, StreamingAlgorithm};

/// A state guess; same representation and update rule as a linear guess.
pub type StateGuess = GuessConf;

/// Folds `(q_hat, c_hat)` into the guess whose chunk-start value is `snap`.
///
/// An unset snapshot never compares equal.
pub fn snapshot_update(snap: StateGuess, q_hat: u64, c_hat: Conf) -> Result<StateGuess, DecodeError> {
    if c_hat < Conf::zero() || c_hat > Conf::from_integer(1) {
        return Err(DecodeError::Confidence(c_hat));
    }
    if snap.value == Some(q_hat) {
        return Ok(StateGuess::new(q_hat, snap.conf + c_hat));
    }
    let c = snap.conf - c_hat;
    Ok(if c < Conf::zero() { StateGuess::new(q_hat, -c) } else { StateGuess { value: snap.value, conf: c } })
}

/// Runs one chunk over the live `slots`.
///
/// `sub(a, start)` estimates section `a` (1-based) from `start`. Sections
/// run in `perm` order; each reads the chunk-start snapshot only. Returns the
/// smallest changed slot (1-based) when a reset happened.
pub fn general_chunk<F>(
    slots: &mut [StateGuess],
    snap: &mut Vec<StateGuess>,
    perm: &[usize],
    q_start: u64,
    init: u64,
    mut sub: F,
) -> Result<Option<usize>, DecodeError>
where
    F: FnMut(usize, u64) -> Result<(u64, Conf), DecodeError>,
{
    snap.clear();
    snap.extend_from_slice(slots);
    for &pa in perm {
        let start = if pa == 1 { q_start } else { snap[pa - 2].value.unwrap_or(init) };
        let (q, c) = sub(pa, start)?;
        slots[pa - 1] = snapshot_update(snap[pa - 1], q, c)?;
    }
    let changed = slots.iter().zip(snap.iter()).position(|(s, o)| s.value != o.value);
    if let Some(a) = changed {
        for s in &mut slots[a + 1..] {
            *s = StateGuess::unset();
        }
    }
    Ok(changed.map(|a| a + 1))
}

/// Final answer of an interval from its slots.
pub fn general_result(slots: &[StateGuess], init: u64, ell: u64) -> (u64, Conf) {
    match slots.last().and_then(|s| s.value) {
        Some(q) => {
            let min = slots.iter().map(|s| s.conf).min().unwrap_or_else(Conf::zero);
            (q, min / Conf::from_integer(ell as i64))
        }
        None => (init, Conf::zero()),
    }
}

#[allow(clippy::too_many_arguments)]
fn est_general<R: Rng + ?Sized>(
    ctx: &mut DecodeCtx,
    i: usize,
    j: usize,
    q_start: u64,
    bs: &mut BitStream<'_>,
    a: &dyn StreamingAlgorithm,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<(u64, Conf), DecodeError> {
    let expected = check_entry(i, j, bs, sp)?;
    let start = bs.cursor();
    let out = if j == i + 1 {
        let (b, c) = ctx.leaf(j, bs, sp, rng)?;
        (a.step(q_start, b), c)
    } else {
        let r = sp.r() as usize;
        let sub = (j - i) / r;
        let frame = ctx.layout.frame_regs();
        ctx.meter.alloc(frame);
        let init = a.init_state();
        let mut slots = vec![StateGuess::unset(); r];
        let mut snap = Vec::with_capacity(r);
        for _ in 0..sp.ell() {
            let perm = random_permutation(r, rng);
            general_chunk(&mut slots, &mut snap, &perm, q_start, init, |pa, s| {
                est_general(ctx, i + (pa - 1) * sub, i + pa * sub, s, bs, a, sp, rng)
            })?;
        }
        ctx.meter.free(frame);
        general_result(&slots, init, sp.ell())
    };
    ctx.audit.record(level_of(j - i, sp.r()), out.1);
    check_exit(i, j, start, expected, bs)?;
    Ok(out)
}

/// `estA(i, j, q_start)` on its own: reads exactly `copies_consumed(i, j)` copies.
pub fn est_a_general<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    q_start: u64,
    bs: &mut BitStream<'_>,
    a: &dyn StreamingAlgorithm,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<(u64, Conf), DecodeError> {
    let mut ctx = DecodeCtx::new(sp, a.state_bits(), Mode::General);
    est_general(&mut ctx, i, j, q_start, bs, a, sp, rng)
}

/// [`est_a_general`] plus space accounting.
#[allow(clippy::too_many_arguments)]
pub fn est_a_general_metered<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    q_start: u64,
    bs: &mut BitStream<'_>,
    a: &dyn StreamingAlgorithm,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<IntervalProbe, DecodeError> {
    let mut ctx = DecodeCtx::new(sp, a.state_bits(), Mode::General);
    let (value, conf) = est_general(&mut ctx, i, j, q_start, bs, a, sp, rng)?;
    Ok(IntervalProbe { value, conf, peak_registers: ctx.meter.peak(), layout: ctx.layout })
}

/// `T` full-interval state estimates merged by weighted majority; `value`
/// is the algorithm output on the merged state.
pub fn run_general<R: Rng + ?Sized>(
    a: &dyn StreamingAlgorithm,
    bs: &mut BitStream<'_>,
    sp: &StreamParams,
    rng: &mut R,
) -> Result<DecodeReport, DecodeError> {
    let mut ctx = DecodeCtx::new(sp, a.state_bits(), Mode::General);
    ctx.meter.alloc(ctx.layout.top_regs());
    let init = a.init_state();
    let mut acc = GuessConf::unset();
    let mut estimates = Vec::with_capacity(sp.t() as usize);
    for _ in 0..sp.t() {
        let (q, c) = est_general(&mut ctx, 0, sp.n(), init, bs, a, sp, rng)?;
        estimates.push((q, c));
        acc = weighted_update(acc, q, c)?;
    }
    ctx.meter.free(ctx.layout.top_regs());
    let value = a.output(acc.value.unwrap_or(init));
    Ok(finish(ctx, acc, value, estimates, bs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use crate::dec_linear::run_linear;
    use crate::enc::{copies_consumed, encode_source};
    use crate::rm_ldc::LdcOverrides;
    use crate::stream_model::{dot, lift_linear, Dfa4, IndexAlgorithm};
    use num_rational::Ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(a: i64, b: i64) -> Conf {
        Conf::new(a, b)
    }

    fn small(n: usize, ell: u64, t: u64) -> StreamParams {
        StreamParams::build(n, 4, ell, t, Mode::General, Ratio::new(1, 2), &LdcOverrides::desk()).unwrap()
    }

    fn sg(v: u64, c: Conf) -> StateGuess {
        StateGuess::new(v, c)
    }

    #[test]
    fn snapshot_update_rules() {
        assert_eq!(snapshot_update(sg(3, r(1, 2)), 3, r(1, 4)).unwrap(), sg(3, r(3, 4)));
        assert_eq!(snapshot_update(sg(3, r(1, 2)), 5, r(1, 4)).unwrap(), sg(3, r(1, 4)));
        assert_eq!(snapshot_update(sg(3, r(1, 8)), 5, r(1, 4)).unwrap(), sg(5, r(1, 8)));
        assert_eq!(snapshot_update(StateGuess::unset(), 0, r(1, 4)).unwrap(), sg(0, r(1, 4)));
        assert_eq!(snapshot_update(StateGuess::unset(), 0, r(0, 1)).unwrap(), StateGuess::unset());
        assert!(snapshot_update(StateGuess::unset(), 0, r(3, 2)).is_err());
    }

    #[test]
    fn change_resets_later_slots() {
        let before = vec![sg(10, r(1, 2)), sg(20, r(1, 2)), sg(30, r(1, 2)), sg(40, r(1, 2))];
        let mut slots = before.clone();
        let mut snap = Vec::new();
        let reset = general_chunk(&mut slots, &mut snap, &[3, 1, 4, 2], 0, 0, |pa, _| {
            Ok(if pa == 2 { (21, r(1, 1)) } else { (pa as u64 * 10, r(0, 1)) })
        })
        .unwrap();
        assert_eq!(reset, Some(2));
        assert_eq!(slots[0], before[0]);
        assert_eq!(slots[1], sg(21, r(1, 2)));
        assert_eq!(&slots[2..], &[StateGuess::unset(); 2]);
    }

    #[test]
    fn smallest_change_wins() {
        let mut slots = vec![sg(1, r(1, 8)), sg(2, r(1, 8)), sg(3, r(1, 8)), sg(4, r(1, 8))];
        let mut snap = Vec::new();
        let reset = general_chunk(&mut slots, &mut snap, &[4, 3, 2, 1], 0, 0, |pa, _| {
            Ok(if pa == 2 || pa == 4 { (99, r(1, 4)) } else { (pa as u64, r(1, 4)) })
        })
        .unwrap();
        assert_eq!(reset, Some(2));
        assert_eq!(slots[1], sg(99, r(1, 8)));
        assert!(slots[2..].iter().all(|s| s.value.is_none() && s.conf.is_zero()));
        // Unset slots always form a suffix.
        let first_unset = slots.iter().position(|s| s.value.is_none()).unwrap();
        assert!(slots[first_unset..].iter().all(|s| s.value.is_none()));
    }

    #[test]
    fn sections_start_from_snapshot() {
        let mut slots = vec![sg(5, r(1, 8)), sg(6, r(1, 8)), StateGuess::unset(), sg(8, r(1, 8))];
        let mut snap = Vec::new();
        let mut starts = Vec::new();
        general_chunk(&mut slots, &mut snap, &[1, 2, 3, 4], 77, 0, |pa, s| {
            starts.push((pa, s));
            // Every section flips its slot, so live values differ from snapshots.
            Ok((1000 + pa as u64, r(1, 2)))
        })
        .unwrap();
        assert_eq!(starts, vec![(1, 77), (2, 5), (3, 6), (4, 0)]);
    }

    #[test]
    fn agreeing_chunk_keeps_all() {
        // Each slot is written once per chunk, from its snapshot.
        let mut slots = vec![sg(1, r(1, 8)), sg(2, r(1, 8))];
        let mut snap = Vec::new();
        let reset = general_chunk(&mut slots, &mut snap, &[1, 2], 0, 0, |pa, _| Ok((pa as u64, r(1, 16)))).unwrap();
        assert_eq!(reset, None);
        assert_eq!(slots, vec![sg(1, r(3, 16)), sg(2, r(3, 16))]);
    }

    #[test]
    fn result_of_unset_tail() {
        assert_eq!(general_result(&[sg(1, r(1, 4)), StateGuess::unset()], 9, 4), (9, r(0, 1)));
        assert_eq!(general_result(&[sg(1, r(1, 4)), sg(2, r(1, 2))], 9, 4), (2, r(1, 16)));
    }

    /// Clean confidence at level `t`: slot `a` is first set in chunk `a`,
    /// so each level keeps `(ell - r + 1) / ell` of its child confidence.
    fn clean_conf(t: u32, ell: i64) -> Conf {
        r(1, 4) * r(ell - 3, ell).pow(t as i32)
    }

    #[test]
    fn clean_estimates_are_exact() {
        let sp = small(16, 5, 1);
        let x = Bits::from_bit_str("0110100111010010").unwrap();
        let src = encode_source(&x, &sp).unwrap();
        let a = Dfa4;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (i, j, q) in [(0usize, 1usize, 0u64), (5, 6, 2), (4, 8, 3), (0, 16, 0), (8, 12, 1)] {
            let mut bs = BitStream::new(src.clone());
            let (s, c) = est_a_general(i, j, q, &mut bs, &a, &sp, &mut rng).unwrap();
            let want = a.run_from(q, &mut x.iter().skip(i).take(j - i));
            assert_eq!((s, c), (want, clean_conf(level_of(j - i, 4), 5)), "({i}, {j}] from {q}");
            assert_eq!(bs.cursor(), copies_consumed(i, j, &sp).unwrap() * sp.copy_bits());
        }
    }

    #[test]
    fn clean_index_lookup() {
        let a = IndexAlgorithm::new(IndexAlgorithm::default_width(16).unwrap(), 5).unwrap();
        let x = a.encode_pairs(&[(2, true), (5, true), (1, false), (7, false)]);
        let sp = small(16, 5, 2);
        let mut bs = BitStream::instrumented(encode_source(&x, &sp).unwrap());
        let rep = run_general(&a, &mut bs, &sp, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(rep.value, 1);
        assert_eq!(rep.conf, clean_conf(2, 5) * 2);
        assert_eq!(rep.bits_read, sp.m_len());
        assert_eq!(rep.audit.violations, 0);
        let spans = bs.spans().unwrap();
        assert!(spans.windows(2).all(|w| w[0].1 <= w[1].0));
    }

    #[test]
    fn lifted_linear_matches_linear_pipeline() {
        let x = Bits::from_bit_str("1011001110001101").unwrap();
        let y = Bits::from_bit_str("0111010110010011").unwrap();
        let l = dot(&y);
        let sp = small(16, 5, 1).with_mode(Mode::Linear);
        let src = encode_source(&x, &sp).unwrap();
        let lin = run_linear(&l, &mut BitStream::new(src.clone()), &sp, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let gen = run_general(&lift_linear(&l), &mut BitStream::new(src), &sp, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(lin.value, l.eval(&x));
        assert_eq!(gen.value, lin.value);
        assert_eq!((lin.conf, gen.conf), (r(1, 4), clean_conf(2, 5)));
    }

    #[test]
    fn short_chunks_leave_tail_unset() {
        // With ell < r the last slot is never filled.
        let sp = small(4, 3, 1);
        let x = Bits::from_bit_str("1011").unwrap();
        let mut bs = BitStream::new(encode_source(&x, &sp).unwrap());
        let out = est_a_general(0, 4, 2, &mut bs, &Dfa4, &sp, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out, (Dfa4.init_state(), r(0, 1)));
    }

    #[test]
    fn general_frames_hold_snapshots() {
        let sp = small(16, 2, 1);
        let x = Bits::zeros(16);
        let mut bs = BitStream::new(encode_source(&x, &sp).unwrap());
        let rep = run_general(&Dfa4, &mut bs, &sp, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let l = rep.layout;
        assert_eq!(l.mode, Mode::General);
        assert_eq!(rep.peak_registers, l.top_regs() + 2 * l.frame_regs() + l.leaf_regs);
    }
}
