//! Univariate polynomials over GF(q) and Reed-Solomon style decoding:
//! interpolation, Berlekamp-Welch, errors-and-erasures, and Forney's GMD for
//! concatenated codes.
//!
//! Two independent bounded-distance decoders live here. The generic one
//! solves the Berlekamp-Welch system by Gaussian elimination and works for
//! any evaluation set. [`FullLengthRs`] is a syndrome decoder
//! (Berlekamp-Massey with erasures, Forney values) for the case where the
//! evaluation set is all of GF(q)*, which is what curve decoding uses. Both
//! return the unique codeword inside the radius or nothing, so they must
//! agree; the tests hold them to that.

use thiserror::Error;

use crate::bits::Bits;
use crate::galois::Field;
use crate::inner_code::InnerCode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RsError {
    #[error("duplicate evaluation point {0}")]
    DuplicateAlpha(u16),
    #[error("need {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("erased points are not allowed here")]
    ErasedPoint,
    #[error("{blocks} blocks but {alphas} evaluation points")]
    LengthMismatch { blocks: usize, alphas: usize },
    #[error("block of {got} bits, inner code expects {expected}")]
    BlockLength { got: u64, expected: u32 },
    #[error("degree bound {deg_bound} leaves no redundancy for {n} points")]
    DegreeBound { deg_bound: usize, n: usize },
}

/// Coefficients low degree first, without trailing zeros. The zero
/// polynomial is the empty list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    coeffs: Vec<u16>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<u16>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: u16) -> Self {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[u16] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, i: usize) -> u16 {
        self.coeffs.get(i).copied().unwrap_or(0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) ^ other.coeff(i)).collect())
    }

    pub fn mul(&self, f: &Field, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![0u16; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] ^= f.mul(a, b);
            }
        }
        Poly::new(out)
    }

    pub fn scale(&self, f: &Field, c: u16) -> Poly {
        Poly::new(self.coeffs.iter().map(|&a| f.mul(a, c)).collect())
    }

    /// Quotient and remainder. Panics on a zero divisor.
    pub fn divrem(&self, f: &Field, div: &Poly) -> (Poly, Poly) {
        let dd = div.degree().expect("division by the zero polynomial");
        let lead_inv = f.inv_nonzero(div.coeffs[dd]);
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (Poly::zero(), self.clone());
        }
        let mut quot = vec![0u16; rem.len() - dd];
        for i in (dd..rem.len()).rev() {
            let c = rem[i];
            if c == 0 {
                continue;
            }
            let t = f.mul(c, lead_inv);
            quot[i - dd] = t;
            for (j, &dc) in div.coeffs.iter().enumerate() {
                rem[i - dd + j] ^= f.mul(t, dc);
            }
        }
        (Poly::new(quot), Poly::new(rem))
    }

    /// `self(inner(x))`.
    pub fn compose(&self, f: &Field, inner: &Poly) -> Poly {
        let mut acc = Poly::zero();
        for &c in self.coeffs.iter().rev() {
            acc = acc.mul(f, inner).add(&Poly::constant(c));
        }
        acc
    }
}

/// Horner evaluation.
pub fn poly_eval(f: &Field, p: &Poly, alpha: u16) -> u16 {
    p.coeffs.iter().rev().fold(0u16, |acc, &c| f.mul(acc, alpha) ^ c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPoint {
    pub alpha: u16,
    pub value: u16,
    pub erased: bool,
}

impl EvalPoint {
    pub fn new(alpha: u16, value: u16) -> Self {
        Self { alpha, value, erased: false }
    }

    pub fn erased(alpha: u16) -> Self {
        Self { alpha, value: 0, erased: true }
    }
}

fn check_distinct(points: &[EvalPoint]) -> Result<(), RsError> {
    let mut alphas: Vec<u16> = points.iter().map(|p| p.alpha).collect();
    alphas.sort_unstable();
    for w in alphas.windows(2) {
        if w[0] == w[1] {
            return Err(RsError::DuplicateAlpha(w[0]));
        }
    }
    Ok(())
}

/// The polynomial of degree <= `target_deg` through the first
/// `target_deg + 1` non-erased points (Newton divided differences).
pub fn interpolate(f: &Field, points: &[EvalPoint], target_deg: usize) -> Result<Poly, RsError> {
    check_distinct(points)?;
    let used: Vec<&EvalPoint> = points.iter().filter(|p| !p.erased).take(target_deg + 1).collect();
    if used.len() < target_deg + 1 {
        return Err(RsError::TooFewPoints { needed: target_deg + 1, got: used.len() });
    }
    let n = used.len();
    let xs: Vec<u16> = used.iter().map(|p| p.alpha).collect();
    let mut dd: Vec<u16> = used.iter().map(|p| p.value).collect();
    for level in 1..n {
        for i in (level..n).rev() {
            let num = dd[i] ^ dd[i - 1];
            let den = xs[i] ^ xs[i - level];
            dd[i] = f.mul(num, f.inv_nonzero(den));
        }
    }
    // Newton form to monomial coefficients.
    let mut acc = Poly::zero();
    for i in (0..n).rev() {
        acc = acc.mul(f, &Poly::new(vec![xs[i], 1])).add(&Poly::constant(dd[i]));
    }
    Ok(acc)
}

/// Gaussian elimination over GF(q) on an augmented matrix (`ncols + 1`
/// entries per row). Returns one solution with free variables set to zero,
/// or `None` if inconsistent.
pub(crate) fn solve_linear(f: &Field, mut rows: Vec<Vec<u16>>, ncols: usize) -> Option<Vec<u16>> {
    let nrows = rows.len();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..nrows).find(|&i| rows[i][c] != 0) else {
            continue;
        };
        rows.swap(r, p);
        let inv = f.inv_nonzero(rows[r][c]);
        for v in rows[r][c..].iter_mut() {
            *v = f.mul(*v, inv);
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c] == 0 {
                continue;
            }
            let factor = row[c];
            for (v, &pv) in row[c..].iter_mut().zip(&pivot_row[c..]) {
                *v ^= f.mul(factor, pv);
            }
        }
        pivot_cols.push(c);
        r += 1;
        if r == nrows {
            break;
        }
    }
    if rows[r..].iter().any(|row| row[ncols] != 0) {
        return None;
    }
    let mut x = vec![0u16; ncols];
    for (i, &c) in pivot_cols.iter().enumerate() {
        x[c] = rows[i][ncols];
    }
    Some(x)
}

fn bw_core(f: &Field, pts: &[(u16, u16)], deg_bound: usize) -> Option<Poly> {
    let n = pts.len();
    if n < deg_bound + 1 {
        return None;
    }
    let e = (n - deg_bound - 1) / 2;
    // Unknowns: N_0..N_{e+deg_bound}, then E_0..E_{e-1}; E is monic of degree e.
    let n_n = e + deg_bound + 1;
    let ncols = n_n + e;
    let rows: Vec<Vec<u16>> = pts
        .iter()
        .map(|&(a, v)| {
            let mut row = vec![0u16; ncols + 1];
            let mut pw = 1u16;
            for j in 0..n_n {
                row[j] = pw;
                if j < e {
                    row[n_n + j] = f.mul(v, pw);
                }
                if j == e {
                    row[ncols] = f.mul(v, pw);
                }
                pw = f.mul(pw, a);
            }
            if e >= n_n {
                row[ncols] = f.mul(v, f.pow(a, e as u64));
            }
            row
        })
        .collect();
    let sol = solve_linear(f, rows, ncols)?;
    let num = Poly::new(sol[..n_n].to_vec());
    let mut ec = sol[n_n..].to_vec();
    ec.push(1);
    let den = Poly::new(ec);
    let (g, rem) = num.divrem(f, &den);
    if !rem.is_zero() || g.degree().is_some_and(|d| d > deg_bound) {
        return None;
    }
    let errors = pts.iter().filter(|&&(a, v)| poly_eval(f, &g, a) != v).count();
    (errors <= e).then_some(g)
}

/// Berlekamp-Welch: the unique `g` with `deg g <= deg_bound` disagreeing with
/// at most `floor((n - deg_bound - 1) / 2)` of the points, if it exists.
pub fn berlekamp_welch(f: &Field, points: &[EvalPoint], deg_bound: usize) -> Result<Option<Poly>, RsError> {
    check_distinct(points)?;
    if points.iter().any(|p| p.erased) {
        return Err(RsError::ErasedPoint);
    }
    if points.len() < deg_bound + 1 {
        return Err(RsError::TooFewPoints { needed: deg_bound + 1, got: points.len() });
    }
    let pts: Vec<(u16, u16)> = points.iter().map(|p| (p.alpha, p.value)).collect();
    Ok(bw_core(f, &pts, deg_bound))
}

/// Decodes when `2 * errors + erasures < n - deg_bound`.
pub fn errors_and_erasures_decode(f: &Field, points: &[EvalPoint], deg_bound: usize) -> Result<Option<Poly>, RsError> {
    check_distinct(points)?;
    let pts: Vec<(u16, u16)> = points.iter().filter(|p| !p.erased).map(|p| (p.alpha, p.value)).collect();
    Ok(bw_core(f, &pts, deg_bound))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GmdOutcome {
    /// `None` is the no-codeword outcome.
    pub poly: Option<Poly>,
    /// Bit distance to the returned candidate, or the decoding radius when
    /// nothing was found.
    pub total_bit_dist: u32,
}

/// Decoding radius of the concatenated code: half its designed distance
/// `(n - deg_bound) * d_inner`, rounded down.
pub fn gmd_radius(n: usize, deg_bound: usize, inner: &InnerCode) -> u32 {
    ((n - deg_bound) as u32 * inner.min_distance()) / 2
}

/// Least-reliable-last order: stable sort on inner distance.
fn reliability_order(dists: &[u32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by_key(|&i| dists[i]);
    order
}

/// Forney GMD over the generic Berlekamp-Welch route.
///
/// Inner-decodes every block, then for each erasure count `tau` in
/// `0..n - deg_bound` erases the `tau` least reliable symbols and runs
/// errors-and-erasures decoding. The candidate closest in bit distance wins.
/// Within [`gmd_radius`] it is the unique nearest codeword; beyond it the
/// caller decides whether to trust it.
pub fn gmd_decode(
    f: &Field,
    inner: &InnerCode,
    blocks: &[Bits],
    alphas: &[u16],
    deg_bound: usize,
) -> Result<GmdOutcome, RsError> {
    if blocks.len() != alphas.len() {
        return Err(RsError::LengthMismatch { blocks: blocks.len(), alphas: alphas.len() });
    }
    let n = alphas.len();
    if n <= deg_bound {
        return Err(RsError::DegreeBound { deg_bound, n });
    }
    let mut words = Vec::with_capacity(n);
    for b in blocks {
        if b.len() != u64::from(inner.block_len()) {
            return Err(RsError::BlockLength { got: b.len(), expected: inner.block_len() });
        }
        words.push(b.word_at(0, inner.block_len()));
    }
    let mut pts: Vec<EvalPoint> = alphas.iter().map(|&a| EvalPoint::new(a, 0)).collect();
    check_distinct(&pts)?;
    let decoded: Vec<(u16, u32)> = words.iter().map(|&w| inner.decode_word(w)).collect();
    let dists: Vec<u32> = decoded.iter().map(|d| d.1).collect();
    let order = reliability_order(&dists);
    let lower_bound: u32 = dists.iter().sum();
    let radius = gmd_radius(n, deg_bound, inner);

    let mut best: Option<(u32, Poly)> = None;
    for tau in 0..n - deg_bound {
        for (k, &i) in order.iter().enumerate() {
            pts[i] = if k >= n - tau {
                EvalPoint::erased(alphas[i])
            } else {
                EvalPoint::new(alphas[i], decoded[i].0)
            };
        }
        let Some(g) = errors_and_erasures_decode(f, &pts, deg_bound)? else {
            continue;
        };
        let dist: u32 = alphas
            .iter()
            .zip(&words)
            .map(|(&a, &w)| inner.distance_to(w, poly_eval(f, &g, a)))
            .sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, g));
        }
        // Within the radius no other codeword can be strictly closer.
        let bd = best.as_ref().map(|b| b.0).unwrap_or(u32::MAX);
        if bd <= radius || bd == lower_bound {
            break;
        }
    }
    Ok(match best {
        Some((d, g)) => GmdOutcome { poly: Some(g), total_bit_dist: d },
        None => GmdOutcome { poly: None, total_bit_dist: radius },
    })
}

/// Result of a syndrome-route GMD decode on a full-length code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurveDecode {
    /// Value of the decoded polynomial at 0, if a codeword within radius was found.
    pub at_zero: Option<u16>,
    pub total_bit_dist: u32,
}

/// Syndrome decoder for the evaluation code of polynomials of degree
/// `<= deg_bound` on all nonzero elements `1, 2, ..., q-1`, in that order.
///
/// Its GMD ladder only runs erasure counts `tau` with `nsyn - tau` even (plus
/// `tau = 0`): when `nsyn - tau` is odd, any codeword trial `tau` can reach
/// satisfies `2e + tau - 1 <= nsyn` with one erasure fewer, so trial `tau - 1`
/// already returned it.
#[derive(Debug, Clone)]
pub struct FullLengthRs {
    field: Field,
    n: usize,
    deg_bound: usize,
    nsyn: usize,
    locators: Vec<u16>,
    inv_locators: Vec<u16>,
    /// `pow[i * nsyn + (j-1)] = X_i^j` for `j` in `1..=nsyn`.
    pow: Vec<u16>,
    /// `inv_pow[i * (nsyn+1) + j] = X_i^-j` for `j` in `0..=nsyn`.
    inv_pow: Vec<u16>,
    /// Packed syndrome contribution of symbol `v` at position `i`, when all
    /// syndromes fit in 64 bits.
    packed: Option<Vec<u64>>,
}

/// Reusable buffers for [`FullLengthRs`].
#[derive(Debug, Default, Clone)]
pub struct RsScratch {
    syms: Vec<u16>,
    dists: Vec<u32>,
    order: Vec<usize>,
    erased_mask: Vec<bool>,
    corrected: Vec<u16>,
    syn: Vec<u16>,
    lambda: Vec<u16>,
    b: Vec<u16>,
    t: Vec<u16>,
    omega: Vec<u16>,
    roots: Vec<usize>,
    /// Position and correction value of every root of the last decode.
    fixes: Vec<(usize, u16)>,
}

impl FullLengthRs {
    pub fn new(field: &Field, deg_bound: usize) -> Result<Self, RsError> {
        let n = field.order() as usize - 1;
        if deg_bound + 1 >= n {
            return Err(RsError::DegreeBound { deg_bound, n });
        }
        let nsyn = n - deg_bound - 1;
        let locators: Vec<u16> = (1..=n as u16).collect();
        let inv_locators: Vec<u16> = locators.iter().map(|&x| field.inv_nonzero(x)).collect();
        let mut pow = vec![0u16; n * nsyn];
        let mut inv_pow = vec![0u16; n * (nsyn + 1)];
        for i in 0..n {
            let mut p = locators[i];
            for j in 0..nsyn {
                pow[i * nsyn + j] = p;
                p = field.mul(p, locators[i]);
            }
            let mut p = 1u16;
            for j in 0..=nsyn {
                inv_pow[i * (nsyn + 1) + j] = p;
                p = field.mul(p, inv_locators[i]);
            }
        }
        let w = usize::from(field.width());
        let packed = (nsyn * w <= 64).then(|| {
            let q = field.order() as usize;
            let mut t = vec![0u64; n * q];
            for i in 0..n {
                for v in 0..q {
                    t[i * q + v] = (0..nsyn).fold(0u64, |acc, j| {
                        acc | (u64::from(field.mul(v as u16, pow[i * nsyn + j])) << (j * w))
                    });
                }
            }
            t
        });
        Ok(Self { field: field.clone(), n, deg_bound, nsyn, locators, inv_locators, pow, inv_pow, packed })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn alphas(&self) -> &[u16] {
        &self.locators
    }

    /// Fills `out` with `S_j = sum_i word_i X_i^j`; true when all vanish.
    fn syndromes(&self, word: &[u16], out: &mut Vec<u16>) -> bool {
        out.clear();
        if let Some(t) = &self.packed {
            let q = self.field.order() as usize;
            let w = usize::from(self.field.width());
            let acc = word.iter().enumerate().fold(0u64, |acc, (i, &v)| acc ^ t[i * q + v as usize]);
            let mask = (1u64 << w) - 1;
            out.extend((0..self.nsyn).map(|j| ((acc >> (j * w)) & mask) as u16));
            return acc == 0;
        }
        let f = &self.field;
        out.resize(self.nsyn, 0);
        for (i, &r) in word.iter().enumerate() {
            if r == 0 {
                continue;
            }
            let row = &self.pow[i * self.nsyn..(i + 1) * self.nsyn];
            for (s, &p) in out.iter_mut().zip(row) {
                *s ^= f.mul(r, p);
            }
        }
        out.iter().all(|&s| s == 0)
    }

    /// Errors-and-erasures decode of `received`. Values at erased positions
    /// may be anything. On success the codeword is left in `scratch`.
    pub fn decode_ee(&self, received: &[u16], erased: &[bool], scratch: &mut RsScratch) -> bool {
        let mut syn = std::mem::take(&mut scratch.syn);
        self.syndromes(received, &mut syn);
        let erased_list: Vec<usize> = (0..self.n).filter(|&i| erased[i]).collect();
        let ok = self.core(&erased_list, &syn, scratch);
        scratch.syn = syn;
        scratch.corrected.clear();
        scratch.corrected.extend_from_slice(received);
        if ok {
            for &(i, y) in &scratch.fixes {
                scratch.corrected[i] ^= y;
            }
        }
        ok
    }

    /// Codeword produced by the last successful [`Self::decode_ee`].
    pub fn corrected(scratch: &RsScratch) -> &[u16] {
        &scratch.corrected
    }

    /// Berlekamp-Massey with erasures, Chien search, Forney values. On
    /// success `sc.fixes` holds the corrections to apply to the received word.
    fn core(&self, erased: &[usize], syn: &[u16], sc: &mut RsScratch) -> bool {
        let f = &self.field;
        let r_max = self.nsyn;
        let s = erased.len();
        if s > r_max {
            return false;
        }
        let lambda = &mut sc.lambda;
        lambda.clear();
        lambda.push(1);
        for &i in erased {
            let x = self.locators[i];
            lambda.push(0);
            for j in (1..lambda.len()).rev() {
                lambda[j] ^= f.mul(lambda[j - 1], x);
            }
        }
        let b = &mut sc.b;
        b.clear();
        b.extend_from_slice(lambda);
        let mut l = s;
        let t = &mut sc.t;
        for r in s + 1..=r_max {
            // Discrepancy: sum_j Lambda_j S_{r-j}, S indexed from 1.
            let mut delta = 0u16;
            for (j, &lj) in lambda.iter().enumerate().take(r) {
                delta ^= f.mul(lj, syn[r - j - 1]);
            }
            if delta == 0 {
                b.insert(0, 0);
                continue;
            }
            t.clear();
            t.extend_from_slice(lambda);
            if t.len() < b.len() + 1 {
                t.resize(b.len() + 1, 0);
            }
            for (j, &bj) in b.iter().enumerate() {
                t[j + 1] ^= f.mul(delta, bj);
            }
            if 2 * l < r + s {
                let dinv = f.inv_nonzero(delta);
                b.clear();
                b.extend(lambda.iter().map(|&v| f.mul(v, dinv)));
                l = r + s - l;
            } else {
                b.insert(0, 0);
            }
            std::mem::swap(lambda, t);
        }
        while lambda.last() == Some(&0) {
            lambda.pop();
        }
        let deg = lambda.len() - 1;
        if deg != l || 2 * l > r_max + s {
            return false;
        }
        // Chien search.
        let roots = &mut sc.roots;
        roots.clear();
        let stride = self.nsyn + 1;
        for i in 0..self.n {
            if roots.len() + (self.n - i) < deg {
                return false;
            }
            let ip = &self.inv_pow[i * stride..i * stride + deg + 1];
            let v = lambda.iter().zip(ip).fold(0u16, |acc, (&c, &p)| acc ^ f.mul(c, p));
            if v == 0 {
                roots.push(i);
            }
        }
        if roots.len() != deg {
            return false;
        }
        let mask = &mut sc.erased_mask;
        mask.clear();
        mask.resize(self.n, false);
        for &i in erased {
            mask[i] = true;
        }
        if roots.iter().filter(|&&i| mask[i]).count() != s {
            return false;
        }
        // Omega = S(x) Psi(x) mod x^R, S(x) = sum_j S_j x^(j-1).
        let omega = &mut sc.omega;
        omega.clear();
        omega.resize(r_max, 0);
        for (i, &li) in lambda.iter().enumerate() {
            if li == 0 {
                continue;
            }
            for (o, &sj) in omega[i.min(r_max)..].iter_mut().zip(syn) {
                *o ^= f.mul(li, sj);
            }
        }
        sc.fixes.clear();
        let mut errors = 0usize;
        for &i in roots.iter() {
            let ip = &self.inv_pow[i * stride..(i + 1) * stride];
            // Formal derivative: odd-degree terms of Psi, shifted down.
            let dv = lambda.iter().enumerate().skip(1).step_by(2).fold(0u16, |acc, (m, &c)| acc ^ f.mul(c, ip[m - 1]));
            if dv == 0 {
                return false;
            }
            let ov = omega.iter().zip(ip).fold(0u16, |acc, (&c, &p)| acc ^ f.mul(c, p));
            let y = f.mul(ov, f.inv_nonzero(dv));
            if !mask[i] && y != 0 {
                errors += 1;
            }
            sc.fixes.push((i, y));
        }
        if 2 * errors + s > r_max {
            return false;
        }
        // The corrected word must have vanishing syndromes.
        let t = &mut sc.t;
        t.clear();
        t.extend_from_slice(syn);
        for &(i, y) in &sc.fixes {
            if y == 0 {
                continue;
            }
            for (sj, &p) in t.iter_mut().zip(&self.pow[i * self.nsyn..(i + 1) * self.nsyn]) {
                *sj ^= f.mul(y, p);
            }
        }
        t.iter().all(|&v| v == 0)
    }

    /// Polynomial coefficients of a codeword by inverse transform:
    /// `g_j = sum_i c_i X_i^{-j}`.
    pub fn poly_of_codeword(&self, codeword: &[u16]) -> Poly {
        let f = &self.field;
        let coeffs = (0..=self.deg_bound)
            .map(|j| {
                codeword.iter().zip(&self.inv_locators).fold(0u16, |acc, (&c, &xi)| acc ^ f.mul(c, f.pow(xi, j as u64)))
            })
            .collect();
        Poly::new(coeffs)
    }

    /// GMD over the syndrome route. `blocks[i]` is the received inner block
    /// at evaluation point `i + 1`. Agrees with [`gmd_decode`] whenever that
    /// finds a candidate within [`gmd_radius`]; anything farther is reported
    /// as no codeword.
    pub fn gmd(&self, inner: &InnerCode, blocks: &[u64], sc: &mut RsScratch) -> CurveDecode {
        debug_assert_eq!(blocks.len(), self.n);
        let radius = gmd_radius(self.n, self.deg_bound, inner);
        let none = CurveDecode { at_zero: None, total_bit_dist: radius };
        let mut syms = std::mem::take(&mut sc.syms);
        let mut dists = std::mem::take(&mut sc.dists);
        syms.clear();
        dists.clear();
        let mut lower_bound = 0u32;
        let mut hard_zero = 0u16;
        for &w in blocks {
            let (s, d) = inner.decode_word(w);
            syms.push(s);
            dists.push(d);
            lower_bound += d;
            hard_zero ^= s;
        }
        let result = if lower_bound > radius {
            // Every candidate is at least this far away.
            none
        } else {
            let mut syn = std::mem::take(&mut sc.syn);
            let clean = self.syndromes(&syms, &mut syn);
            let out = if clean {
                // Hard decisions already form a codeword at the minimum possible distance.
                CurveDecode { at_zero: Some(hard_zero), total_bit_dist: lower_bound }
            } else {
                self.ladder(inner, blocks, &syms, &dists, lower_bound, hard_zero, &syn, radius, sc)
            };
            sc.syn = syn;
            out
        };
        sc.syms = syms;
        sc.dists = dists;
        result
    }

    #[allow(clippy::too_many_arguments)]
    fn ladder(
        &self,
        inner: &InnerCode,
        blocks: &[u64],
        syms: &[u16],
        dists: &[u32],
        lower_bound: u32,
        hard_zero: u16,
        syn: &[u16],
        radius: u32,
        sc: &mut RsScratch,
    ) -> CurveDecode {
        // Stable reliability order: bucket by inner distance.
        let mut order = std::mem::take(&mut sc.order);
        order.clear();
        let max_d = dists.iter().copied().max().unwrap_or(0);
        for d in 0..=max_d {
            order.extend((0..self.n).filter(|&i| dists[i] == d));
        }
        // Changing symbol i away from its hard decision costs at least
        // `extra(i)` bits beyond dists[i]; non-increasing along `order`.
        let d_in = inner.min_distance();
        let extra = |i: usize| d_in.saturating_sub(2 * dists[i]);
        let mut best: Option<(u32, u16)> = None;
        let mut floor = lower_bound;
        let taus = (0..=self.nsyn).filter(|&tau| tau == 0 || (self.nsyn - tau).is_multiple_of(2));
        for tau in taus {
            let found = self.core(&order[self.n - tau..], syn, sc);
            if found {
                let mut dist = lower_bound;
                let mut zero = hard_zero;
                for &(i, y) in &sc.fixes {
                    if y != 0 {
                        dist = dist - dists[i] + inner.distance_to(blocks[i], syms[i] ^ y);
                        zero ^= y;
                    }
                }
                if best.is_none_or(|(d, _)| dist < d) {
                    best = Some((dist, zero));
                }
                // Within the radius no other codeword can be strictly closer.
                let bd = best.map_or(u32::MAX, |b| b.0);
                if bd <= radius || bd == lower_bound {
                    break;
                }
            }
            // No codeword other than the one just returned has fewer than
            // `need` disagreements among the `n - tau` unerased positions, so
            // any later candidate pays at least the cheapest `need` of them.
            let need = (self.nsyn - tau) / 2 + 1;
            let kept = self.n - tau;
            if need <= kept {
                let cost: u32 = order[kept - need..kept].iter().map(|&i| extra(i)).sum();
                floor = floor.max(lower_bound + cost);
                if floor > radius {
                    break;
                }
            }
        }
        sc.order = order;
        match best {
            Some((d, z)) if d <= radius => CurveDecode { at_zero: Some(z), total_bit_dist: d },
            _ => CurveDecode { at_zero: None, total_bit_dist: radius },
        }
    }
}
