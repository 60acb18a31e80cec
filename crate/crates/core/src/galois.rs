//! Arithmetic in GF(2^w), 1 <= w <= 16.
//!
//! Elements are integers in `[0, q)` whose bits are polynomial coefficients
//! over GF(2). Addition is XOR. Multiplication is a table lookup for w <= 8
//! and log/antilog otherwise; both tables are built from a carry-less
//! reference product so they can be cross-checked.
//!
//! Hot decoding loops work on raw `u16` values through [`Field`]; the
//! [`FieldElem`] wrapper carries its [`FieldSpec`] and rejects mixed-field
//! operations.

use thiserror::Error;

/// Largest supported extension degree.
pub const MAX_WIDTH: u8 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GaloisError {
    #[error("field width {0} outside supported range 1..=16")]
    Width(u8),
    #[error("reduction polynomial {poly:#x} is not an irreducible polynomial of degree {w}")]
    Reducible { w: u8, poly: u32 },
    #[error("value {value} is not an element of GF({q})")]
    NotInField { value: u32, q: u32 },
    #[error("operands belong to different fields ({0:?} vs {1:?})")]
    Mismatch(FieldSpec, FieldSpec),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// Width plus reduction polynomial. The polynomial includes the leading `x^w` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldSpec {
    w: u8,
    reduction_poly: u32,
}

impl FieldSpec {
    /// The lexicographically smallest irreducible polynomial of degree `w`.
    pub fn canonical(w: u8) -> Result<Self, GaloisError> {
        if w == 0 || w > MAX_WIDTH {
            return Err(GaloisError::Width(w));
        }
        let lo = 1u32 << w;
        let poly = (lo..lo << 1)
            .find(|&p| is_irreducible(p))
            .expect("irreducible polynomials exist in every degree");
        Ok(Self { w, reduction_poly: poly })
    }

    pub fn new(w: u8, reduction_poly: u32) -> Result<Self, GaloisError> {
        if w == 0 || w > MAX_WIDTH {
            return Err(GaloisError::Width(w));
        }
        if poly_degree(reduction_poly) != Some(u32::from(w)) || !is_irreducible(reduction_poly) {
            return Err(GaloisError::Reducible { w, poly: reduction_poly });
        }
        Ok(Self { w, reduction_poly })
    }

    pub fn width(&self) -> u8 {
        self.w
    }

    pub fn reduction_poly(&self) -> u32 {
        self.reduction_poly
    }

    /// Field order q = 2^w.
    pub fn order(&self) -> u32 {
        1 << self.w
    }
}

fn poly_degree(p: u32) -> Option<u32> {
    (p != 0).then(|| 31 - p.leading_zeros())
}

/// Remainder of carry-less division `a mod b` over GF(2).
fn poly_rem(mut a: u32, b: u32) -> u32 {
    let db = poly_degree(b).expect("nonzero divisor");
    while let Some(da) = poly_degree(a) {
        if da < db {
            break;
        }
        a ^= b << (da - db);
    }
    a
}

/// Trial division by every polynomial of degree 1..=deg/2.
pub fn is_irreducible(p: u32) -> bool {
    let Some(deg) = poly_degree(p) else {
        return false;
    };
    if deg == 0 {
        return false;
    }
    for dd in 1..=deg / 2 {
        for cand in (1u32 << dd)..(1u32 << (dd + 1)) {
            if poly_rem(p, cand) == 0 {
                return false;
            }
        }
    }
    true
}

/// Carry-less product reduced modulo `poly` (bit-serial reference).
pub fn clmul_reduce(a: u32, b: u32, w: u8, poly: u32) -> u32 {
    let mut acc = 0u32;
    let mut a = a;
    let mut b = b;
    let top = 1u32 << w;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & top != 0 {
            a ^= poly;
        }
    }
    acc
}

/// A field instance with precomputed tables.
#[derive(Debug, Clone)]
pub struct Field {
    spec: FieldSpec,
    q: u32,
    generator: u16,
    exp: Vec<u16>,
    log: Vec<u16>,
    inv: Vec<u16>,
    mul_table: Option<Vec<u16>>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.mul_table == other.mul_table
    }
}

impl Field {
    pub fn new(spec: FieldSpec) -> Self {
        let q = spec.order();
        let (w, poly) = (spec.w, spec.reduction_poly);
        let order = q - 1;
        let generator = (1..q)
            .find(|&g| multiplicative_order(g, w, poly) == order)
            .expect("multiplicative group of a finite field is cyclic") as u16;
        let mut exp = vec![0u16; 2 * order as usize];
        let mut log = vec![0u16; q as usize];
        let mut v = 1u32;
        for i in 0..order as usize {
            exp[i] = v as u16;
            exp[i + order as usize] = v as u16;
            log[v as usize] = i as u16;
            v = clmul_reduce(v, u32::from(generator), w, poly);
        }
        let mut inv = vec![0u16; q as usize];
        for a in 1..q as usize {
            inv[a] = exp[(order as usize - log[a] as usize) % order as usize];
        }
        let mul_table = (w <= 8).then(|| {
            let mut t = vec![0u16; (q * q) as usize];
            for a in 0..q {
                for b in 0..q {
                    t[(a * q + b) as usize] = clmul_reduce(a, b, w, poly) as u16;
                }
            }
            t
        });
        Self { spec, q, generator, exp, log, inv, mul_table }
    }

    pub fn canonical(w: u8) -> Result<Self, GaloisError> {
        Ok(Self::new(FieldSpec::canonical(w)?))
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    pub fn width(&self) -> u8 {
        self.spec.w
    }

    /// A primitive element: its powers enumerate all nonzero elements.
    pub fn generator(&self) -> u16 {
        self.generator
    }

    #[inline]
    pub fn add(&self, a: u16, b: u16) -> u16 {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        match &self.mul_table {
            Some(t) => t[((a as usize) << self.spec.w) | b as usize],
            None => {
                if a == 0 || b == 0 {
                    0
                } else {
                    self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
                }
            }
        }
    }

    /// Inverse of a nonzero element.
    pub fn inv(&self, a: u16) -> Result<u16, GaloisError> {
        if a == 0 {
            return Err(GaloisError::ZeroInverse);
        }
        Ok(self.inv[a as usize])
    }

    /// Inverse for callers that have already excluded zero.
    #[inline]
    pub(crate) fn inv_nonzero(&self, a: u16) -> u16 {
        debug_assert!(a != 0);
        self.inv[a as usize]
    }

    pub fn pow(&self, a: u16, mut e: u64) -> u16 {
        let mut base = a;
        let mut acc = 1u16;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// All q elements in canonical order `0, 1, ..., q-1`.
    pub fn enumerate(&self) -> impl Iterator<Item = u16> {
        (0..self.q).map(|v| v as u16)
    }

    pub fn contains(&self, v: u32) -> bool {
        v < self.q
    }

    pub fn elem(&self, value: u32) -> Result<FieldElem, GaloisError> {
        if !self.contains(value) {
            return Err(GaloisError::NotInField { value, q: self.q });
        }
        Ok(FieldElem { value: value as u16, spec: self.spec })
    }

    fn check(&self, a: &FieldElem) -> Result<(), GaloisError> {
        if a.spec != self.spec {
            return Err(GaloisError::Mismatch(a.spec, self.spec));
        }
        Ok(())
    }

    pub fn gf_add(&self, a: FieldElem, b: FieldElem) -> Result<FieldElem, GaloisError> {
        self.check(&a)?;
        self.check(&b)?;
        Ok(FieldElem { value: a.value ^ b.value, spec: self.spec })
    }

    pub fn gf_mul(&self, a: FieldElem, b: FieldElem) -> Result<FieldElem, GaloisError> {
        self.check(&a)?;
        self.check(&b)?;
        Ok(FieldElem { value: self.mul(a.value, b.value), spec: self.spec })
    }

    pub fn gf_inv(&self, a: FieldElem) -> Result<FieldElem, GaloisError> {
        self.check(&a)?;
        Ok(FieldElem { value: self.inv(a.value)?, spec: self.spec })
    }

    pub fn gf_pow(&self, a: FieldElem, e: u64) -> Result<FieldElem, GaloisError> {
        self.check(&a)?;
        Ok(FieldElem { value: self.pow(a.value, e), spec: self.spec })
    }

    /// Copy of this field with one product-table entry perturbed. Only used to
    /// confirm that the self-test notices a broken multiplier.
    #[doc(hidden)]
    pub fn with_mutated_product(&self, a: u16, b: u16) -> Self {
        let mut f = self.clone();
        if let Some(t) = f.mul_table.as_mut() {
            let idx = a as usize * self.q as usize + b as usize;
            t[idx] ^= 1;
        } else {
            // No table: perturb the antilog entry instead.
            let i = (self.log[a as usize] as usize + self.log[b as usize] as usize) % (self.q as usize - 1);
            f.exp[i] ^= 1;
            f.exp[i + self.q as usize - 1] ^= 1;
        }
        f
    }
}

fn multiplicative_order(g: u32, w: u8, poly: u32) -> u32 {
    let mut v = g;
    let mut k = 1;
    while v != 1 {
        v = clmul_reduce(v, g, w, poly);
        k += 1;
        if k > (1 << w) {
            return 0;
        }
    }
    k
}

/// A field element tagged with the field it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElem {
    value: u16,
    spec: FieldSpec,
}

impl FieldElem {
    pub fn value(&self) -> u16 {
        self.value
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gf16() -> Field {
        Field::canonical(4).unwrap()
    }

    #[test]
    fn canonical_polys() {
        assert_eq!(FieldSpec::canonical(4).unwrap().reduction_poly(), 0b1_0011);
        assert_eq!(FieldSpec::canonical(3).unwrap().reduction_poly(), 0b1011);
        assert_eq!(FieldSpec::canonical(8).unwrap().reduction_poly(), 0x11b);
        assert!(FieldSpec::canonical(0).is_err());
        assert!(FieldSpec::canonical(17).is_err());
        assert!(FieldSpec::new(4, 0b1_0001).is_err());
    }

    #[test]
    fn add_examples() {
        let f = gf16();
        let a = f.elem(0x9).unwrap();
        let b = f.elem(0x3).unwrap();
        assert_eq!(f.gf_add(a, b).unwrap().value(), 0xA);
        assert_eq!(f.gf_add(a, a).unwrap().value(), 0);
        assert_eq!(f.gf_add(a, f.elem(0).unwrap()).unwrap(), a);
    }

    #[test]
    fn mul_examples() {
        let f = gf16();
        assert_eq!(f.mul(0x8, 0x2), 0x3);
        for a in f.enumerate() {
            assert_eq!(f.mul(a, 1), a);
            assert_eq!(f.mul(a, 0), 0);
        }
    }

    #[test]
    fn mul_agrees_with_generator_tables() {
        // Oracle: log/antilog built by repeated multiplication by the generator.
        for w in 1..=6u8 {
            let f = Field::canonical(w).unwrap();
            let q = f.order() as usize;
            let g = f.generator();
            let mut antilog = vec![0u16; q.saturating_sub(1).max(1)];
            let mut lg = vec![0usize; q];
            let mut v = 1u16;
            for (i, slot) in antilog.iter_mut().enumerate().take(q - 1) {
                *slot = v;
                lg[v as usize] = i;
                v = f.mul(v, g);
            }
            for a in 0..q as u16 {
                for b in 0..q as u16 {
                    let expect = if a == 0 || b == 0 { 0 } else { antilog[(lg[a as usize] + lg[b as usize]) % (q - 1)] };
                    assert_eq!(f.mul(a, b), expect, "w={w} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn large_width_uses_log_tables() {
        let f = Field::canonical(12).unwrap();
        let spec = f.spec();
        for (a, b) in [(3u16, 4000u16), (4095, 4095), (1234, 77)] {
            let expect = clmul_reduce(a.into(), b.into(), 12, spec.reduction_poly()) as u16;
            assert_eq!(f.mul(a, b), expect);
        }
    }

    #[test]
    fn inverses_exhaustive() {
        for w in [2u8, 4, 6, 9] {
            let f = Field::canonical(w).unwrap();
            for a in 1..f.order() as u16 {
                assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
            }
            assert_eq!(f.inv(0), Err(GaloisError::ZeroInverse));
            assert_eq!(f.inv(1).unwrap(), 1);
        }
    }

    #[test]
    fn pow_orbit_and_group_order() {
        let f = gf16();
        let g = f.generator();
        let mut seen: Vec<u16> = (0..15).map(|i| f.pow(g, i)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, (1..16).collect::<Vec<u16>>());
        for a in f.enumerate() {
            assert_eq!(f.pow(a, 0), 1);
            if a != 0 {
                assert_eq!(f.pow(a, 15), 1);
            }
        }
    }

    #[test]
    fn enumeration_is_ordered() {
        let f = Field::canonical(2).unwrap();
        assert_eq!(f.enumerate().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(gf16().enumerate().count(), 16);
    }

    #[test]
    fn field_axioms_small() {
        for w in 1..=4u8 {
            let f = Field::canonical(w).unwrap();
            let els: Vec<u16> = f.enumerate().collect();
            for &a in &els {
                for &b in &els {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for &c in &els {
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, b ^ c), f.mul(a, b) ^ f.mul(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn mismatched_fields_rejected() {
        let f = gf16();
        let g = Field::canonical(3).unwrap();
        let a = f.elem(3).unwrap();
        let b = g.elem(3).unwrap();
        assert!(matches!(f.gf_add(a, b), Err(GaloisError::Mismatch(..))));
        assert!(matches!(f.gf_mul(b, a), Err(GaloisError::Mismatch(..))));
        assert!(f.elem(16).is_err());
    }

    #[test]
    fn mutation_changes_table() {
        let f = gf16();
        let m = f.with_mutated_product(5, 7);
        assert_ne!(f.mul(5, 7), m.mul(5, 7));
        assert_ne!(f, m);
    }
}
