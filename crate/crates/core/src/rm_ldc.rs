//! Locally decodable code: a systematic multivariate Reed-Muller outer code
//! over GF(q) concatenated with the binary inner code, decoded locally along
//! random degree-2 curves with an attached confidence.
//!
//! Outer codewords are evaluations of a polynomial of total degree `<= d-1`
//! in `nvars` variables at every point of GF(q)^nvars. The message sits on a
//! simplex grid: tuples `(e_{a1}, ..., e_{a_nvars})` with `sum a <= d-1`, where
//! `e_t` is the field element with integer value `t`.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::Rng;
use thiserror::Error;

use crate::bits::Bits;
use crate::galois::{Field, FieldSpec, GaloisError};
use crate::inner_code::{InnerCode, InnerCodeError, InnerCodeSpec, MAX_INNER_WIDTH};
use crate::rs_decoding::{FullLengthRs, RsError, RsScratch};

/// Default number of curves per local decode.
pub const DEFAULT_K: u32 = 32;

/// Largest outer codeword (in symbols) this module will materialize.
const MAX_OUTER_SYMBOLS: u64 = 1 << 28;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LdcError {
    #[error("message length must be at least 1")]
    EmptyMessage,
    #[error("degree parameter d={0} is degenerate; need d >= 2")]
    Degenerate(u32),
    #[error("grid capacity C(nvars+d-1, nvars) = {capacity} < n = {n}")]
    Capacity { capacity: u64, n: usize },
    #[error("q = {q} outside [2d/eps, 4d/eps] = [{lo}, {hi}]")]
    QRange { q: u32, lo: Ratio<i64>, hi: Ratio<i64> },
    #[error("q - 1 = {} must exceed 2d = {}", .q - 1, 2 * .d)]
    NoSlack { q: u32, d: u32 },
    #[error("eps_ldc must be positive, got {0}")]
    Eps(Ratio<i64>),
    #[error("field width {0} unsupported; the inner code allows 2..=7")]
    Width(u8),
    #[error("outer code of {0} symbols is too large to materialize")]
    TooLarge(u64),
    #[error("no valid parameterization exists under the width cap")]
    NoParameters,
    #[error("message has {got} bits, expected {expected}")]
    MessageLength { got: u64, expected: usize },
    #[error("index {0} outside 1..=n")]
    Index(usize),
    #[error("query position {0} was not collected")]
    MissingPosition(u64),
    #[error("curve does not pass through the grid point of index {0}")]
    CurveMismatch(usize),
    #[error("k must be at least 1")]
    NoCurves,
    #[error(transparent)]
    Galois(#[from] GaloisError),
    #[error(transparent)]
    Inner(#[from] InnerCodeError),
    #[error(transparent)]
    Rs(#[from] RsError),
}

/// Explicit choices that bypass the automatic parameter search.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LdcOverrides {
    pub d: Option<u32>,
    pub nvars: Option<u32>,
    pub w: Option<u8>,
    pub k: Option<u32>,
    /// Skip the `q in [2d/eps, 4d/eps]` check.
    pub waive_q_range: bool,
}

impl LdcOverrides {
    /// The fixed desk configuration: q = 16, d = 4, nvars = 3, k = 32.
    pub fn desk() -> Self {
        Self { d: Some(4), nvars: Some(3), w: Some(4), k: Some(DEFAULT_K), waive_q_range: false }
    }
}

#[derive(Debug, Clone)]
pub struct LdcParams {
    n: usize,
    nvars: u32,
    d: u32,
    k: u32,
    eps_ldc: Ratio<i64>,
    field: Field,
    inner: InnerCode,
    rs: FullLengthRs,
    grid: Vec<Vec<u16>>,
    monomials: Vec<Vec<u32>>,
    /// Row `m` holds the contribution of each grid value to monomial `m`.
    interp: Vec<Vec<u16>>,
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}

fn grid_capacity(nvars: u32, d: u32) -> u64 {
    binomial(u64::from(nvars + d - 1), u64::from(nvars))
}

fn q_range(d: u32, eps: Ratio<i64>) -> (Ratio<i64>, Ratio<i64>) {
    let two_d = Ratio::from_integer(2 * i64::from(d));
    (two_d / eps, two_d * 2 / eps)
}

fn check_q(q: u32, d: u32, eps: Ratio<i64>, waive: bool) -> Result<(), LdcError> {
    if q - 1 <= 2 * d {
        return Err(LdcError::NoSlack { q, d });
    }
    let (lo, hi) = q_range(d, eps);
    let qr = Ratio::from_integer(i64::from(q));
    if !waive && (qr < lo || qr > hi) {
        return Err(LdcError::QRange { q, lo, hi });
    }
    Ok(())
}

/// All exponent tuples of length `nvars` with sum `<= max`, lexicographic.
fn simplex_tuples(nvars: u32, max: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: u32, nvars: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == nvars as usize {
            out.push(prefix.clone());
            return;
        }
        for a in 0..=left {
            prefix.push(a);
            rec(prefix, left - a, nvars, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), max, nvars, &mut out);
    out
}

fn invert(f: &Field, m: &[Vec<u16>]) -> Option<Vec<Vec<u16>>> {
    let n = m.len();
    let mut a: Vec<Vec<u16>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| u16::from(i == j)));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&i| a[i][c] != 0)?;
        a.swap(c, p);
        let inv = f.inv_nonzero(a[c][c]);
        for v in a[c].iter_mut() {
            *v = f.mul(*v, inv);
        }
        let pivot = a[c].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != c && row[c] != 0 {
                let t = row[c];
                for (v, &pv) in row.iter_mut().zip(&pivot) {
                    *v ^= f.mul(t, pv);
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

fn eval_monomial(f: &Field, point: &[u16], mono: &[u32]) -> u16 {
    point.iter().zip(mono).fold(1u16, |acc, (&v, &e)| f.mul(acc, f.pow(v, u64::from(e))))
}

fn build(n: usize, nvars: u32, d: u32, w: u8, k: u32, eps: Ratio<i64>) -> Result<LdcParams, LdcError> {
    let field = Field::canonical(w)?;
    let inner = InnerCode::new(w)?;
    let rs = FullLengthRs::new(&field, 2 * d as usize - 2)?;
    let tuples = simplex_tuples(nvars, d - 1);
    let grid: Vec<Vec<u16>> = tuples.iter().map(|t| t.iter().map(|&a| a as u16).collect()).collect();
    let monomials = tuples;
    let vander: Vec<Vec<u16>> =
        grid.iter().map(|p| monomials.iter().map(|m| eval_monomial(&field, p, m)).collect()).collect();
    // coeffs = V^-1 * values; row m of V^-1 maps grid values to coefficient m.
    let interp = invert(&field, &vander).expect("simplex grid is unisolvent for total degree d-1");
    Ok(LdcParams { n, nvars, d, k, eps_ldc: eps, field, inner, rs, grid, monomials, interp })
}

/// Chooses parameters for `n` message bits. Unfixed values are searched to
/// minimize the codeword length, ties going to smaller q then smaller d.
pub fn ldc_setup(n: usize, eps_ldc: Ratio<i64>, overrides: &LdcOverrides) -> Result<LdcParams, LdcError> {
    if n == 0 {
        return Err(LdcError::EmptyMessage);
    }
    if eps_ldc <= Ratio::from_integer(0) {
        return Err(LdcError::Eps(eps_ldc));
    }
    let k = overrides.k.unwrap_or(DEFAULT_K);
    if k == 0 {
        return Err(LdcError::NoCurves);
    }
    if let Some(d) = overrides.d {
        if d < 2 {
            return Err(LdcError::Degenerate(d));
        }
    }
    if let Some(w) = overrides.w {
        if !(2..=MAX_INNER_WIDTH).contains(&w) {
            return Err(LdcError::Width(w));
        }
    }
    // Fully pinned: validate and report the specific violation.
    if let (Some(d), Some(nvars), Some(w)) = (overrides.d, overrides.nvars, overrides.w) {
        let capacity = grid_capacity(nvars, d);
        if capacity < n as u64 {
            return Err(LdcError::Capacity { capacity, n });
        }
        check_q(1u32 << w, d, eps_ldc, overrides.waive_q_range)?;
        let symbols = (1u64 << w).checked_pow(nvars).unwrap_or(u64::MAX);
        if symbols > MAX_OUTER_SYMBOLS {
            return Err(LdcError::TooLarge(symbols));
        }
        return build(n, nvars, d, w, k, eps_ldc);
    }

    let mut best: Option<(u64, u32, u32, u32, u8)> = None;
    let d_range: Vec<u32> = match overrides.d {
        Some(d) => vec![d],
        None => (2..=64).collect(),
    };
    for d in d_range {
        let widths: Vec<u8> = match overrides.w {
            Some(w) => vec![w],
            None => (2..=MAX_INNER_WIDTH).collect(),
        };
        // Smallest admissible q for this d.
        let Some(w) = widths.into_iter().find(|&w| check_q(1u32 << w, d, eps_ldc, overrides.waive_q_range).is_ok())
        else {
            continue;
        };
        let nvars = match overrides.nvars {
            Some(v) if grid_capacity(v, d) >= n as u64 => v,
            Some(_) => continue,
            None => match (1..=64).find(|&v| grid_capacity(v, d) >= n as u64) {
                Some(v) => v,
                None => continue,
            },
        };
        let q = 1u64 << w;
        let Some(symbols) = q.checked_pow(nvars).filter(|&s| s <= MAX_OUTER_SYMBOLS) else {
            continue;
        };
        let len = symbols << (w - 1);
        let cand = (len, q as u32, d, nvars, w);
        if best.is_none_or(|b| (cand.0, cand.1, cand.2) < (b.0, b.1, b.2)) {
            best = Some(cand);
        }
    }
    let (_, _, d, nvars, w) = best.ok_or(LdcError::NoParameters)?;
    build(n, nvars, d, w, k, eps_ldc)
}

impl LdcParams {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nvars(&self) -> u32 {
        self.nvars
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn eps_ldc(&self) -> Ratio<i64> {
        self.eps_ldc
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn field_spec(&self) -> FieldSpec {
        self.field.spec()
    }

    pub fn inner(&self) -> &InnerCode {
        &self.inner
    }

    pub fn inner_spec(&self) -> &InnerCodeSpec {
        self.inner.spec()
    }

    pub fn q(&self) -> u32 {
        self.field.order()
    }

    pub fn w(&self) -> u8 {
        self.field.width()
    }

    pub fn n_inner(&self) -> u32 {
        self.inner.block_len()
    }

    /// Number of outer symbols, `q^nvars`.
    pub fn n_outer(&self) -> u64 {
        u64::from(self.q()).pow(self.nvars)
    }

    /// Codeword length in bits, `N = q^nvars * N_inner`.
    pub fn codeword_bits(&self) -> u64 {
        self.n_outer() * u64::from(self.n_inner())
    }

    pub fn grid_capacity(&self) -> u64 {
        grid_capacity(self.nvars, self.d)
    }

    /// Per-curve acceptance cap `floor((q - 2d + 1) * (N_inner / 2) / 2)`.
    pub fn d_cap(&self) -> u32 {
        (self.q() - 2 * self.d + 1) * (self.n_inner() / 2) / 2
    }

    /// Outer symbols queried per local decode, `Q = k (q - 1)`.
    pub fn queries_per_decode(&self) -> u64 {
        u64::from(self.k) * u64::from(self.q() - 1)
    }

    /// Every leaf confidence has a denominator dividing this.
    pub fn conf_denominator(&self) -> i64 {
        4 * i64::from(self.k) * i64::from(self.q() - 1) * i64::from(self.n_inner())
    }

    /// Index of a point in the codeword: first coordinate most significant.
    pub fn symbol_index(&self, point: &[u16]) -> u64 {
        let q = u64::from(self.q());
        point.iter().fold(0u64, |acc, &c| acc * q + u64::from(c))
    }

    pub fn point_of_symbol(&self, mut idx: u64) -> Vec<u16> {
        let q = u64::from(self.q());
        let mut p = vec![0u16; self.nvars as usize];
        for c in p.iter_mut().rev() {
            *c = (idx % q) as u16;
            idx /= q;
        }
        p
    }

    /// Coefficients of the message polynomial, aligned with [`Self::monomials`].
    pub fn message_poly(&self, x: &Bits) -> Result<Vec<u16>, LdcError> {
        if x.len() != self.n as u64 {
            return Err(LdcError::MessageLength { got: x.len(), expected: self.n });
        }
        let mut coeffs = vec![0u16; self.monomials.len()];
        for g in (0..self.n).filter(|&g| x.get(g as u64)) {
            for (c, row) in coeffs.iter_mut().zip(&self.interp) {
                *c ^= row[g];
            }
        }
        Ok(coeffs)
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    pub fn eval_poly(&self, coeffs: &[u16], point: &[u16]) -> u16 {
        coeffs
            .iter()
            .zip(&self.monomials)
            .filter(|(&c, _)| c != 0)
            .fold(0u16, |acc, (&c, m)| acc ^ self.field.mul(c, eval_monomial(&self.field, point, m)))
    }
}

/// The `i`-th grid point, 1-based.
pub fn grid_point_of(i: usize, params: &LdcParams) -> Result<Vec<u16>, LdcError> {
    if i == 0 || i > params.n {
        return Err(LdcError::Index(i));
    }
    Ok(params.grid[i - 1].clone())
}

/// Outer codeword: the message polynomial at every point of GF(q)^nvars.
pub fn rm_encode(x: &Bits, params: &LdcParams) -> Result<Vec<u16>, LdcError> {
    let coeffs = params.message_poly(x)?;
    let f = &params.field;
    let q = params.q() as usize;
    let nv = params.nvars as usize;
    // pw[v][e] = v^e
    let pw: Vec<Vec<u16>> =
        (0..q as u16).map(|v| (0..params.d).map(|e| f.pow(v, u64::from(e))).collect()).collect();
    let terms: Vec<(u16, &Vec<u32>)> =
        coeffs.iter().zip(&params.monomials).filter(|(&c, _)| c != 0).map(|(&c, m)| (c, m)).collect();
    let total = params.n_outer() as usize;
    let mut out = vec![0u16; total];
    let mut point = vec![0usize; nv];
    for sym in out.iter_mut() {
        let mut acc = 0u16;
        for &(c, m) in &terms {
            let mut t = c;
            for (&v, &e) in point.iter().zip(m.iter()) {
                t = f.mul(t, pw[v][e as usize]);
            }
            acc ^= t;
        }
        *sym = acc;
        for c in point.iter_mut().rev() {
            *c += 1;
            if *c < q {
                break;
            }
            *c = 0;
        }
    }
    Ok(out)
}

/// Concatenated codeword: bit `s * N_inner + j` is bit `j` of the inner
/// encoding of outer symbol `s`.
pub fn ldc_encode(x: &Bits, params: &LdcParams) -> Result<Bits, LdcError> {
    let outer = rm_encode(x, params)?;
    let nb = params.n_inner();
    let mut out = Bits::zeros(0);
    for s in outer {
        out.push_word(params.inner.encode_word(s), nb);
    }
    Ok(out)
}

/// `p(lambda) = v0 + v1 lambda + v2 lambda^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Curve {
    pub v0: Vec<u16>,
    pub v1: Vec<u16>,
    pub v2: Vec<u16>,
}

impl Curve {
    pub fn at(&self, f: &Field, lambda: u16) -> Vec<u16> {
        let l2 = f.mul(lambda, lambda);
        self.v0
            .iter()
            .zip(&self.v1)
            .zip(&self.v2)
            .map(|((&a, &b), &c)| a ^ f.mul(b, lambda) ^ f.mul(c, l2))
            .collect()
    }
}

/// Query plan for one local decode.
#[derive(Debug, Clone, Default)]
pub struct QueryPlan {
    index: usize,
    nvars: usize,
    v0: Vec<u16>,
    /// Per curve: `v1` then `v2`, `2 * nvars` entries.
    dirs: Vec<u16>,
    /// Distinct outer symbol indices touched, ascending.
    symbols: Vec<u64>,
    /// `slots[c * (q-1) + (lambda-1)]` indexes `symbols`.
    slots: Vec<u32>,
    raw: Vec<u64>,
}

/// Reusable lookup tables for planning.
#[derive(Debug, Clone, Default)]
pub struct PlanScratch {
    seen: Vec<u64>,
    rank: Vec<u32>,
}

/// Dense dedup tables are used up to this many outer symbols.
const DENSE_PLAN_LIMIT: u64 = 1 << 20;

impl QueryPlan {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn num_curves(&self) -> usize {
        self.dirs.len() / (2 * self.nvars).max(1)
    }

    pub fn curve(&self, c: usize) -> Curve {
        let d = &self.dirs[c * 2 * self.nvars..(c + 1) * 2 * self.nvars];
        Curve { v0: self.v0.clone(), v1: d[..self.nvars].to_vec(), v2: d[self.nvars..].to_vec() }
    }

    pub fn curves(&self) -> Vec<Curve> {
        (0..self.num_curves()).map(|c| self.curve(c)).collect()
    }

    pub fn symbols(&self) -> &[u64] {
        &self.symbols
    }

    pub fn slots(&self) -> &[u32] {
        &self.slots
    }

    /// Planned bit positions within one codeword, ascending and distinct.
    pub fn positions(&self, params: &LdcParams) -> Vec<u64> {
        let nb = u64::from(params.n_inner());
        self.symbols.iter().flat_map(|&s| (0..nb).map(move |j| s * nb + j)).collect()
    }

    pub fn collected_bits(&self, params: &LdcParams) -> u64 {
        self.symbols.len() as u64 * u64::from(params.n_inner())
    }

    fn index_symbols(&mut self, params: &LdcParams, sc: &mut PlanScratch) {
        let f = &params.field;
        let q = params.q() as u16;
        let nv = self.nvars;
        self.raw.clear();
        for d in self.dirs.chunks(2 * nv) {
            let (v1, v2) = d.split_at(nv);
            for l in 1..q {
                let l2 = f.mul(l, l);
                let mut idx = 0u64;
                for j in 0..nv {
                    let c = self.v0[j] ^ f.mul(v1[j], l) ^ f.mul(v2[j], l2);
                    idx = idx * u64::from(q) + u64::from(c);
                }
                self.raw.push(idx);
            }
        }
        self.symbols.clear();
        self.slots.clear();
        let total = params.n_outer();
        if total <= DENSE_PLAN_LIMIT {
            let words = total.div_ceil(64) as usize;
            sc.seen.clear();
            sc.seen.resize(words, 0);
            if sc.rank.len() < total as usize {
                sc.rank.resize(total as usize, 0);
            }
            for &s in &self.raw {
                sc.seen[(s / 64) as usize] |= 1 << (s % 64);
            }
            for (wi, &w) in sc.seen.iter().enumerate() {
                let mut bits = w;
                while bits != 0 {
                    let s = wi as u64 * 64 + u64::from(bits.trailing_zeros());
                    sc.rank[s as usize] = self.symbols.len() as u32;
                    self.symbols.push(s);
                    bits &= bits - 1;
                }
            }
            self.slots.extend(self.raw.iter().map(|&s| sc.rank[s as usize]));
        } else {
            self.symbols.extend_from_slice(&self.raw);
            self.symbols.sort_unstable();
            self.symbols.dedup();
            let symbols = &self.symbols;
            self.slots.extend(self.raw.iter().map(|s| symbols.binary_search(s).expect("present") as u32));
        }
    }
}

/// Samples `k` curves through the grid point of `i` (1-based) with `v1`,
/// `v2` uniform. Degenerate curves are kept.
pub fn plan_queries<R: Rng + ?Sized>(i: usize, params: &LdcParams, rng: &mut R) -> Result<QueryPlan, LdcError> {
    let mut plan = QueryPlan::default();
    plan_queries_into(i, params, rng, &mut plan, &mut PlanScratch::default())?;
    Ok(plan)
}

/// [`plan_queries`] reusing the buffers of `plan`.
pub fn plan_queries_into<R: Rng + ?Sized>(
    i: usize,
    params: &LdcParams,
    rng: &mut R,
    plan: &mut QueryPlan,
    sc: &mut PlanScratch,
) -> Result<(), LdcError> {
    let g = params.grid.get(i.wrapping_sub(1)).filter(|_| i <= params.n).ok_or(LdcError::Index(i))?;
    let q = params.q();
    let nv = params.nvars as usize;
    plan.index = i;
    plan.nvars = nv;
    plan.v0.clear();
    plan.v0.extend_from_slice(g);
    plan.dirs.clear();
    for _ in 0..params.k as usize * 2 * nv {
        plan.dirs.push(rng.random_range(0..q) as u16);
    }
    plan.index_symbols(params, sc);
    Ok(())
}

pub fn plan_for_curves(i: usize, params: &LdcParams, curves: &[Curve]) -> QueryPlan {
    let nv = params.nvars as usize;
    let mut plan = QueryPlan {
        index: i,
        nvars: nv,
        v0: curves.first().map(|c| c.v0.clone()).unwrap_or_else(|| vec![0; nv]),
        ..Default::default()
    };
    for c in curves {
        plan.dirs.extend_from_slice(&c.v1);
        plan.dirs.extend_from_slice(&c.v2);
    }
    plan.index_symbols(params, &mut PlanScratch::default());
    plan
}

/// Exact confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Confidence(Ratio<i64>);

impl Confidence {
    pub fn new(r: Ratio<i64>) -> Option<Self> {
        (r >= Ratio::from_integer(0) && r <= Ratio::from_integer(1)).then_some(Self(r))
    }

    pub fn zero() -> Self {
        Self(Ratio::from_integer(0))
    }

    pub fn value(&self) -> Ratio<i64> {
        self.0
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurveReport {
    /// A codeword within the cap was found.
    pub found: bool,
    pub h0: Option<u16>,
    pub vote: u8,
    /// Bit distance to the decoded curve codeword (the cap when not found).
    pub delta_h: u32,
    pub delta: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeVerdict {
    pub bit: u8,
    pub conf: Confidence,
    pub curves: Vec<CurveReport>,
}

/// Reusable buffers for local decoding.
#[derive(Debug, Default, Clone)]
pub struct LdcScratch {
    rs: RsScratch,
    blocks: Vec<u64>,
    reports: Vec<CurveReport>,
}

impl LdcScratch {
    /// Per-curve reports of the last decode.
    pub fn reports(&self) -> &[CurveReport] {
        &self.reports
    }
}

/// Local decode from the inner blocks of `plan.symbols` (one `u64` each,
/// same order).
pub fn decode_planned(params: &LdcParams, plan: &QueryPlan, blocks: &[u64], scratch: &mut LdcScratch) -> DecodeVerdict {
    let (bit, conf) = decode_planned_bit(params, plan, blocks, scratch);
    DecodeVerdict { bit, conf, curves: scratch.reports.clone() }
}

/// [`decode_planned`] without the per-curve reports; they stay in `scratch`.
pub fn decode_planned_bit(params: &LdcParams, plan: &QueryPlan, blocks: &[u64], scratch: &mut LdcScratch) -> (u8, Confidence) {
    let d_cap = params.d_cap();
    let per_curve = params.q() as usize - 1;
    let mut reports = std::mem::take(&mut scratch.reports);
    reports.clear();
    let mut ones = 0usize;
    for c in 0..plan.num_curves() {
        scratch.blocks.clear();
        scratch.blocks.extend(plan.slots[c * per_curve..(c + 1) * per_curve].iter().map(|&s| blocks[s as usize]));
        let out = params.rs.gmd(&params.inner, &scratch.blocks, &mut scratch.rs);
        let found = out.at_zero.is_some() && out.total_bit_dist <= d_cap;
        let h0 = if found { out.at_zero } else { None };
        let vote = u8::from(h0 == Some(1));
        ones += usize::from(vote);
        reports.push(CurveReport { found, h0, vote, delta_h: if found { out.total_bit_dist } else { d_cap }, delta: 0 });
    }
    let k = plan.num_curves();
    let bit = u8::from(2 * ones > k);
    let mut sum: i64 = 0;
    for r in reports.iter_mut() {
        r.delta = if !r.found {
            d_cap
        } else if r.vote == bit {
            r.delta_h
        } else {
            d_cap - r.delta_h
        };
        sum += i64::from(r.delta);
    }
    let per = i64::from(params.q() - 1) * i64::from(params.n_inner()) * k as i64;
    let raw = Ratio::new(per - 4 * sum, 4 * per);
    scratch.reports = reports;
    (bit, Confidence(raw.max(Ratio::from_integer(0)).min(Ratio::from_integer(1))))
}

/// Local decode of bit `i` (1-based) from collected codeword bits.
pub fn local_decode_with_confidence(
    i: usize,
    collected: &BTreeMap<u64, bool>,
    curves: &[Curve],
    params: &LdcParams,
) -> Result<DecodeVerdict, LdcError> {
    let v0 = grid_point_of(i, params)?;
    if curves.is_empty() {
        return Err(LdcError::NoCurves);
    }
    if curves.iter().any(|c| c.v0 != v0) {
        return Err(LdcError::CurveMismatch(i));
    }
    let plan = plan_for_curves(i, params, curves);
    let nb = u64::from(params.n_inner());
    let mut blocks = Vec::with_capacity(plan.symbols.len());
    for &s in &plan.symbols {
        let mut w = 0u64;
        for j in 0..nb {
            let pos = s * nb + j;
            match collected.get(&pos) {
                Some(&b) => w |= u64::from(b) << j,
                None => return Err(LdcError::MissingPosition(pos)),
            }
        }
        blocks.push(w);
    }
    Ok(decode_planned(params, &plan, &blocks, &mut LdcScratch::default()))
}

/// Inner blocks of `plan.symbols` read directly from a full codeword.
pub fn blocks_from_word(params: &LdcParams, plan: &QueryPlan, word: &Bits) -> Vec<u64> {
    let nb = params.n_inner();
    plan.symbols.iter().map(|&s| word.word_at(s * u64::from(nb), nb)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rs_decoding::{poly_eval, Poly};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half() -> Ratio<i64> {
        Ratio::new(1, 2)
    }

    fn desk() -> LdcParams {
        ldc_setup(16, half(), &LdcOverrides::desk()).unwrap()
    }

    fn tiny(n: usize) -> LdcParams {
        let o = LdcOverrides { d: Some(2), nvars: Some(2), w: Some(3), k: Some(9), waive_q_range: false };
        ldc_setup(n, half(), &o).unwrap()
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(3, 0), 1);
        assert_eq!(binomial(2, 5), 0);
    }

    #[test]
    fn setup_capacity_examples() {
        let o = LdcOverrides { d: Some(4), nvars: Some(2), w: Some(4), ..Default::default() };
        assert_eq!(ldc_setup(16, half(), &o).unwrap_err(), LdcError::Capacity { capacity: 10, n: 16 });
        let p = desk();
        assert_eq!((p.d(), p.nvars(), p.q(), p.grid_capacity()), (4, 3, 16, 20));
        assert_eq!(p.codeword_bits(), 32768);
        assert_eq!(p.d_cap(), 18);
        assert_eq!(p.conf_denominator(), 4 * 32 * 15 * 8);
    }

    #[test]
    fn setup_q_range() {
        let o = LdcOverrides { d: Some(4), ..Default::default() };
        let p = ldc_setup(16, Ratio::new(1, 8), &o).unwrap();
        assert_eq!((p.q(), p.w()), (64, 6));
        let bad = LdcOverrides { d: Some(4), nvars: Some(3), w: Some(4), ..Default::default() };
        assert!(matches!(ldc_setup(16, Ratio::new(1, 8), &bad), Err(LdcError::QRange { .. })));
        let waived = LdcOverrides { waive_q_range: true, ..bad };
        assert!(ldc_setup(16, Ratio::new(1, 8), &waived).is_ok());
        let cramped = LdcOverrides { d: Some(4), nvars: Some(3), w: Some(3), waive_q_range: true, ..Default::default() };
        assert!(matches!(ldc_setup(16, half(), &cramped), Err(LdcError::NoSlack { q: 8, d: 4 })));
    }

    #[test]
    fn setup_minimal() {
        let p = ldc_setup(1, half(), &LdcOverrides::default()).unwrap();
        assert_eq!((p.d(), p.nvars()), (2, 1));
        let o = LdcOverrides { d: Some(1), ..Default::default() };
        assert_eq!(ldc_setup(1, half(), &o).unwrap_err(), LdcError::Degenerate(1));
        assert_eq!(ldc_setup(0, half(), &LdcOverrides::default()).unwrap_err(), LdcError::EmptyMessage);
    }

    #[test]
    fn automatic_search_respects_invariants() {
        for n in [1usize, 2, 5, 16, 40, 100] {
            for eps in [Ratio::new(1, 2), Ratio::new(1, 4), Ratio::new(1, 1)] {
                let Ok(p) = ldc_setup(n, eps, &LdcOverrides::default()) else { continue };
                assert!(p.grid_capacity() >= n as u64);
                assert!(p.q() - 1 > 2 * p.d());
                let (lo, hi) = q_range(p.d(), eps);
                let q = Ratio::from_integer(i64::from(p.q()));
                assert!(lo <= q && q <= hi);
            }
        }
    }

    #[test]
    fn grid_points() {
        let p = desk();
        assert_eq!(grid_point_of(1, &p).unwrap(), vec![0, 0, 0]);
        let pts: Vec<Vec<u16>> = (1..=16).map(|i| grid_point_of(i, &p).unwrap()).collect();
        for a in 0..16 {
            for b in a + 1..16 {
                assert_ne!(pts[a], pts[b]);
            }
            assert!(pts[a].iter().map(|&c| u32::from(c)).sum::<u32>() <= 3);
        }
        assert!(grid_point_of(0, &p).is_err());
        assert!(grid_point_of(17, &p).is_err());
    }

    #[test]
    fn zero_message_and_systematic() {
        let p = desk();
        assert!(rm_encode(&Bits::zeros(16), &p).unwrap().iter().all(|&s| s == 0));
        assert_eq!(ldc_encode(&Bits::zeros(16), &p).unwrap().count_ones(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = Bits::from_bools(&(0..16).map(|_| rng.random_bool(0.5)).collect::<Vec<_>>());
            let cw = rm_encode(&x, &p).unwrap();
            for i in 1..=16 {
                let s = p.symbol_index(&grid_point_of(i, &p).unwrap());
                assert_eq!(cw[s as usize], u16::from(x.get(i as u64 - 1)));
            }
            // Outer symbols agree with direct polynomial evaluation.
            let coeffs = p.message_poly(&x).unwrap();
            for s in (0..4096u64).step_by(97) {
                assert_eq!(cw[s as usize], p.eval_poly(&coeffs, &p.point_of_symbol(s)));
            }
        }
        for i in 1..=16 {
            let mut x = Bits::zeros(16);
            x.set(i - 1, true);
            let cw = rm_encode(&x, &p).unwrap();
            for j in 1..=16 {
                let s = p.symbol_index(&grid_point_of(j, &p).unwrap()) as usize;
                assert_eq!(cw[s], u16::from(i == j as u64));
            }
        }
    }

    #[test]
    fn encoded_length() {
        let o = LdcOverrides { d: Some(4), nvars: Some(2), w: Some(4), ..Default::default() };
        let p = ldc_setup(10, half(), &o).unwrap();
        assert_eq!(ldc_encode(&Bits::zeros(10), &p).unwrap().len(), 2048);
        assert_eq!(p.codeword_bits(), 2048);
    }

    #[test]
    fn outer_and_concatenated_distance() {
        let p = tiny(3);
        let bound = (p.q() - p.d() + 1) as usize * p.q().pow(p.nvars() - 1) as usize;
        let words: Vec<(Vec<u16>, Bits)> = (0..8u64)
            .map(|m| {
                let x = Bits::from_words(vec![m], 3);
                (rm_encode(&x, &p).unwrap(), ldc_encode(&x, &p).unwrap())
            })
            .collect();
        for a in 0..8 {
            for b in a + 1..8 {
                let outer = words[a].0.iter().zip(&words[b].0).filter(|(x, y)| x != y).count();
                assert!(outer >= bound, "{outer} < {bound}");
                let bits = words[a].1.hamming(&words[b].1);
                assert!(bits >= (outer as u64) * u64::from(p.inner().min_distance()));
                assert!(Ratio::new(bits as i64, p.codeword_bits() as i64) >= half() - p.eps_ldc());
            }
        }
    }

    #[test]
    fn restriction_identity_exhaustive() {
        // Every curve over GF(8)^2, two message polynomials.
        let p = tiny(3);
        let f = p.field().clone();
        for m in [0b101u64, 0b011] {
            let x = Bits::from_words(vec![m], 3);
            let coeffs = p.message_poly(&x).unwrap();
            let cw = rm_encode(&x, &p).unwrap();
            for code in 0..8u32.pow(6) {
                let digit = |k: u32| ((code >> (3 * k)) & 7) as u16;
                let curve =
                    Curve { v0: vec![digit(0), digit(1)], v1: vec![digit(2), digit(3)], v2: vec![digit(4), digit(5)] };
                let coords: Vec<Poly> = (0..2)
                    .map(|j| Poly::new(vec![curve.v0[j], curve.v1[j], curve.v2[j]]))
                    .collect();
                let mut restricted = Poly::zero();
                for (&c, mono) in coeffs.iter().zip(p.monomials()) {
                    let mut t = Poly::constant(c);
                    for (cp, &e) in coords.iter().zip(mono) {
                        for _ in 0..e {
                            t = t.mul(&f, cp);
                        }
                    }
                    restricted = restricted.add(&t);
                }
                assert!(restricted.degree().is_none_or(|d| d <= 2 * (p.d() as usize - 1)));
                for l in 0..8u16 {
                    let s = p.symbol_index(&curve.at(&f, l));
                    assert_eq!(poly_eval(&f, &restricted, l), cw[s as usize]);
                }
            }
        }
    }

    #[test]
    fn plan_shape() {
        let p = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let plan = plan_queries(5, &p, &mut rng).unwrap();
        assert_eq!(plan.num_curves(), 32);
        let v0 = grid_point_of(5, &p).unwrap();
        assert!(plan.curves().iter().all(|c| c.at(p.field(), 0) == v0));
        for (c, curve) in plan.curves().iter().enumerate() {
            for l in 1..16u16 {
                let s = p.symbol_index(&curve.at(p.field(), l));
                assert_eq!(plan.symbols()[plan.slots()[c * 15 + l as usize - 1] as usize], s);
            }
        }
        assert_eq!(plan.slots.len(), 32 * 15);
        let pos = plan.positions(&p);
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(pos.len() as u64 <= 32 * 15 * 8);
        assert!(*pos.last().unwrap() < p.codeword_bits());
    }

    #[test]
    fn zero_noise_is_quarter_confidence() {
        let p = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Bits::from_hex("b3a5", 16).unwrap();
        let cw = ldc_encode(&x, &p).unwrap();
        let mut sc = LdcScratch::default();
        for i in 1..=16 {
            let plan = plan_queries(i, &p, &mut rng).unwrap();
            let v = decode_planned(&p, &plan, &blocks_from_word(&p, &plan, &cw), &mut sc);
            assert_eq!(v.bit, u8::from(x.get(i as u64 - 1)));
            assert_eq!(v.conf.value(), Ratio::new(1, 4));
        }
    }

    #[test]
    fn map_interface_matches_planned() {
        let p = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Bits::from_hex("0f0f", 16).unwrap();
        let mut cw = ldc_encode(&x, &p).unwrap();
        for _ in 0..3000 {
            cw.flip(rng.random_range(0..p.codeword_bits()));
        }
        let plan = plan_queries(7, &p, &mut rng).unwrap();
        let map: BTreeMap<u64, bool> = plan.positions(&p).into_iter().map(|q| (q, cw.get(q))).collect();
        let a = local_decode_with_confidence(7, &map, &plan.curves(), &p).unwrap();
        let b = decode_planned(&p, &plan, &blocks_from_word(&p, &plan, &cw), &mut LdcScratch::default());
        assert_eq!(a, b);
        let mut partial = map.clone();
        let first = *partial.keys().next().unwrap();
        partial.remove(&first);
        assert_eq!(
            local_decode_with_confidence(7, &partial, &plan.curves(), &p).unwrap_err(),
            LdcError::MissingPosition(first)
        );
        assert_eq!(
            local_decode_with_confidence(8, &map, &plan.curves(), &p).unwrap_err(),
            LdcError::CurveMismatch(8)
        );
    }

    #[test]
    fn denominator_bound() {
        let p = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Bits::from_hex("1234", 16).unwrap();
        let clean = ldc_encode(&x, &p).unwrap();
        let mut sc = LdcScratch::default();
        for trial in 0..40 {
            let mut cw = clean.clone();
            for q in 0..p.codeword_bits() {
                if rng.random_bool(0.02 * (trial % 8) as f64) {
                    cw.flip(q);
                }
            }
            let plan = plan_queries(1 + trial % 16, &p, &mut rng).unwrap();
            let v = decode_planned(&p, &plan, &blocks_from_word(&p, &plan, &cw), &mut sc);
            assert_eq!(p.conf_denominator() % v.conf.denom(), 0);
            assert!(v.conf.value() <= Ratio::new(1, 4));
        }
    }

    #[test]
    fn targeted_symbol_costs_little() {
        // Destroy the inner block of one outer symbol; every curve through it
        // pays at most one block of distance.
        let p = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Bits::from_hex("beef", 16).unwrap();
        let mut cw = ldc_encode(&x, &p).unwrap();
        let target = 1234u64;
        for j in 0..8 {
            cw.flip(target * 8 + j);
        }
        let mut sc = LdcScratch::default();
        for i in 1..=16 {
            let plan = plan_queries(i, &p, &mut rng).unwrap();
            let v = decode_planned(&p, &plan, &blocks_from_word(&p, &plan, &cw), &mut sc);
            assert_eq!(v.bit, u8::from(x.get(i as u64 - 1)));
            let hits = plan.slots().iter().filter(|&&s| plan.symbols()[s as usize] == target).count() as i64;
            let drop = Ratio::new(1, 4) - v.conf.value();
            assert!(drop <= Ratio::new(hits * 8, p.conf_denominator() / 4));
        }
    }

    #[test]
    fn ten_percent_noise_mostly_correct() {
        let p = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Bits::from_hex("c6a1", 16).unwrap();
        let clean = ldc_encode(&x, &p).unwrap();
        let mut sc = LdcScratch::default();
        let mut ok = 0;
        for t in 0..60 {
            let mut cw = clean.clone();
            for q in 0..p.codeword_bits() {
                if rng.random_bool(0.10) {
                    cw.flip(q);
                }
            }
            let i = 1 + t % 16;
            let plan = plan_queries(i, &p, &mut rng).unwrap();
            let v = decode_planned(&p, &plan, &blocks_from_word(&p, &plan, &cw), &mut sc);
            ok += usize::from(v.bit == u8::from(x.get(i as u64 - 1)));
        }
        assert!(ok >= 58, "{ok}/60");
    }

    #[test]
    fn light_noise_matches_nearest_codeword() {
        // Tiny code: compare the local majority with brute-force nearest codeword.
        let p = tiny(3);
        let words: Vec<Bits> = (0..8u64).map(|m| ldc_encode(&Bits::from_words(vec![m], 3), &p).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut sc = LdcScratch::default();
        for _ in 0..200 {
            let m = rng.random_range(0..8usize);
            let mut cw = words[m].clone();
            for _ in 0..rng.random_range(0..8) {
                cw.flip(rng.random_range(0..cw.len()));
            }
            let nearest = (0..8usize).min_by_key(|&c| words[c].hamming(&cw)).unwrap();
            for i in 1..=3 {
                let plan = plan_queries(i, &p, &mut rng).unwrap();
                let v = decode_planned(&p, &plan, &blocks_from_word(&p, &plan, &cw), &mut sc);
                assert_eq!(v.bit, ((nearest >> (i - 1)) & 1) as u8);
            }
        }
    }
}
