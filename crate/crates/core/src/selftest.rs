//! Exhaustive small-instance checks, runnable from the command line.

use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::Bits;
use crate::channel::{make_pattern, ChannelKind, PatternDescriptor, PatternExtras};
use crate::dec_general::run_general;
use crate::dec_linear::run_linear;
use crate::enc::{encode_source, Mode, StreamParams};
use crate::galois::{clmul_reduce, Field};
use crate::inner_code::InnerCode;
use crate::rm_ldc::LdcOverrides;
use crate::rs_decoding::{berlekamp_welch, poly_eval, EvalPoint, Poly};
use crate::stream_model::{dot, BitStream, CorruptedSource, Dfa4};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

fn suite(name: impl Into<String>, f: impl FnOnce() -> Result<String, String>) -> SuiteResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    SuiteResult { name: name.into(), passed, detail, elapsed: start.elapsed() }
}

/// Ring and field axioms over every pair and triple, plus agreement with
/// carry-less multiplication.
pub fn field_axioms(f: &Field) -> Result<String, String> {
    let q = f.order() as u16;
    let spec = f.spec();
    for a in 0..q {
        if f.mul(a, 1) != a || f.mul(a, 0) != 0 {
            return Err(format!("identity fails at {a}"));
        }
        if a != 0 && f.mul(a, f.inv(a).map_err(|e| e.to_string())?) != 1 {
            return Err(format!("inverse fails at {a}"));
        }
        for b in 0..q {
            let ab = f.mul(a, b);
            if ab != f.mul(b, a) {
                return Err(format!("{a} * {b} is not commutative"));
            }
            if u32::from(ab) != clmul_reduce(a.into(), b.into(), spec.width(), spec.reduction_poly()) {
                return Err(format!("{a} * {b} disagrees with carry-less product"));
            }
            for c in 0..q {
                if f.mul(ab, c) != f.mul(a, f.mul(b, c)) {
                    return Err(format!("associativity fails at ({a}, {b}, {c})"));
                }
                if f.mul(a, b ^ c) != ab ^ f.mul(a, c) {
                    return Err(format!("distributivity fails at ({a}, {b}, {c})"));
                }
            }
        }
    }
    Ok(format!("GF({q}): {} triples", u64::from(q).pow(3)))
}

/// Minimum pairwise distance of the inner code equals `N_inner / 2`.
pub fn inner_distances(widths: &[u8]) -> Result<String, String> {
    for &w in widths {
        let code = InnerCode::new(w).map_err(|e| e.to_string())?;
        let words: Vec<u64> = (0..1u16 << w).map(|s| code.encode_word(s)).collect();
        let mut min = u32::MAX;
        for (i, a) in words.iter().enumerate() {
            for b in &words[i + 1..] {
                min = min.min((a ^ b).count_ones());
            }
        }
        if min != code.block_len() / 2 || min != code.min_distance() {
            return Err(format!("w = {w}: min distance {min}, block {}", code.block_len()));
        }
    }
    Ok(format!("w in {widths:?}"))
}

/// Distinct polynomials of degree at most `deg_bound` differ in at least
/// `q - deg_bound` evaluations over the whole field.
pub fn rs_distance(f: &Field, deg_bound: usize) -> Result<String, String> {
    let q = f.order() as u16;
    let count = u64::from(q).pow(deg_bound as u32 + 1);
    let polys: Vec<Vec<u16>> = (0..count)
        .map(|mut v| {
            (0..=deg_bound)
                .map(|_| {
                    let c = (v % u64::from(q)) as u16;
                    v /= u64::from(q);
                    c
                })
                .collect()
        })
        .collect();
    let evals: Vec<Vec<u16>> =
        polys.iter().map(|p| (0..q).map(|a| poly_eval(f, &Poly::new(p.clone()), a)).collect()).collect();
    let need = usize::from(q) - deg_bound;
    for (i, a) in evals.iter().enumerate() {
        for b in &evals[i + 1..] {
            let d = a.iter().zip(b).filter(|(x, y)| x != y).count();
            if d < need {
                return Err(format!("two codewords at distance {d} < {need}"));
            }
        }
    }
    Ok(format!("{count} codewords, q = {q}, deg <= {deg_bound}"))
}

/// Planted Berlekamp-Welch decodes at the full radius over the nonzero points.
pub fn bw_radius(f: &Field, deg_bound: usize, trials: u32, seed: u64) -> Result<String, String> {
    let q = f.order();
    let n = q as usize - 1;
    let radius = (n - deg_bound - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let g = Poly::new((0..=deg_bound).map(|_| rng.random_range(0..q) as u16).collect());
        let mut pts: Vec<EvalPoint> = (1..=n as u16).map(|a| EvalPoint::new(a, poly_eval(f, &g, a))).collect();
        for i in rand::seq::index::sample(&mut rng, n, radius) {
            pts[i].value ^= rng.random_range(1..q) as u16;
        }
        match berlekamp_welch(f, &pts, deg_bound) {
            Ok(Some(h)) if h == g => {}
            other => return Err(format!("trial {t}: planted {radius} errors, got {other:?}")),
        }
    }
    Ok(format!("{trials} trials, n = {n}, deg <= {deg_bound}, {radius} errors"))
}

/// Every confidence emitted on small clean and noisy runs has the
/// predicted denominator.
pub fn denominators(seed: u64) -> Result<String, String> {
    let mut checked = 0;
    for mode in [Mode::Linear, Mode::General] {
        let sp = StreamParams::build(16, 4, 3, 2, mode, Ratio::new(1, 2), &LdcOverrides::desk()).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Bits::from_bools(&(0..16).map(|_| rng.random()).collect::<Vec<bool>>());
        let y = Bits::from_bools(&(0..16).map(|_| rng.random()).collect::<Vec<bool>>());
        for rho in [Ratio::new(0u64, 1), Ratio::new(1, 10)] {
            let desc = PatternDescriptor {
                kind: ChannelKind::Random,
                seed,
                rho,
                m_len: sp.m_len(),
                eps_budget: None,
                extras: PatternExtras::layout(sp.copy_bits(), sp.ldc().n_inner()),
            };
            let pat = Arc::new(make_pattern(desc).map_err(|e| e.to_string())?);
            let src = CorruptedSource::new(encode_source(&x, &sp).map_err(|e| e.to_string())?, pat).map_err(|e| e.to_string())?;
            let mut bs = BitStream::new(src);
            let rep = match mode {
                Mode::Linear => run_linear(&dot(&y), &mut bs, &sp, &mut rng),
                Mode::General => run_general(&Dfa4, &mut bs, &sp, &mut rng),
            }
            .map_err(|e| e.to_string())?;
            if rep.audit.violations != 0 {
                return Err(format!("{mode} rho {rho}: {} of {} denominators off", rep.audit.violations, rep.audit.checked));
            }
            checked += rep.audit.checked;
        }
    }
    Ok(format!("{checked} confidences"))
}

/// The suites that depend on the multiplier.
pub fn field_suites(f: &Field) -> Vec<SuiteResult> {
    let q = f.order();
    vec![
        suite(format!("field axioms GF({q})"), || field_axioms(f)),
        suite(format!("outer distance GF({q})"), || rs_distance(f, 1)),
        suite(format!("berlekamp-welch radius GF({q})"), || bw_radius(f, (q as usize - 1) / 2 - 1, 200, 7)),
    ]
}

/// Everything, including a check that a one-entry mutation of the GF(16)
/// product table is caught.
pub fn run_selftest() -> Vec<SuiteResult> {
    let mut out = Vec::new();
    for w in [3u8, 4] {
        match Field::canonical(w) {
            Ok(f) => out.extend(field_suites(&f)),
            Err(e) => out.push(suite(format!("field GF(2^{w})"), || Err(e.to_string()))),
        }
    }
    out.push(suite("inner code distance", || inner_distances(&[3, 4, 5, 6])));
    out.push(suite("confidence denominators", || denominators(11)));
    out.push(suite("gf_mul mutation detected", || {
        let f = Field::canonical(4).map_err(|e| e.to_string())?;
        let mutant = f.with_mutated_product(7, 11);
        let caught: Vec<String> = field_suites(&mutant).into_iter().filter(|s| !s.passed).map(|s| s.name).collect();
        if caught.is_empty() {
            Err("mutated multiplier passed every field suite".into())
        } else {
            Ok(format!("caught by {}", caught.join(", ")))
        }
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correct_build_passes() {
        for s in run_selftest() {
            assert!(s.passed, "{}: {}", s.name, s.detail);
        }
    }

    #[test]
    fn every_single_mutation_is_caught() {
        let f = Field::canonical(3).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                let m = f.with_mutated_product(a, b);
                assert!(field_suites(&m).iter().any(|s| !s.passed), "({a}, {b})");
            }
        }
    }
}
