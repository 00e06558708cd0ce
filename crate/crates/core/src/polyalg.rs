//! Multi-indices and sparse multivariate polynomials.
//!
//! Polynomials are stored as sparse maps from exponent vectors to
//! coefficients, expanded about an `origin`: a term `(j, c)` stands for
//! `c * prod_l (xi_l - origin_l)^{j_l}`. Raw monomials use the zero origin.
//! Moment tables carry a matching `center`, and expectations re-expand a
//! polynomial into the table's frame before summing moments.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compensated::Accumulator;
use crate::error::{PceError, Result};
use crate::moments::MomentTable;

/// Relative threshold below which coefficients are dropped after arithmetic.
pub const PRUNE_REL: f64 = 1e-14;

/// Exponent vector `(j_1, ..., j_n)` of a monomial.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// Index of the single variable `xi_l`.
    pub fn unit(n: usize, l: usize) -> Self {
        let mut e = vec![0; n];
        e[l] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, l: usize) -> u32 {
        self.0[l]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Keeps the exponents whose variable bit is set in `mask`, zeroes the rest.
    pub fn restrict(&self, mask: u32) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .enumerate()
                .map(|(l, &e)| if mask >> l & 1 == 1 { e } else { 0 })
                .collect(),
        )
    }

    /// Bit set of variables with a non-zero exponent.
    pub fn support(&self) -> u32 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .fold(0, |m, (l, _)| m | 1 << l)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Graded order: total degree first, then exponent tuples in descending
/// lexicographic order, so `xi_1` precedes `xi_2` and `xi_1^2` precedes `xi_1 xi_2`.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of multi-indices of dimension `n` with total degree at most `p`.
pub fn basis_size(n: usize, p: usize) -> Result<usize> {
    n.checked_add(p)
        .and_then(|np| binomial(np, p))
        .ok_or(PceError::SizeOverflow { n, p })
}

/// All multi-indices of dimension `n` and total degree `<= p`, in graded order.
pub fn enumerate_basis_indices(n: usize, p: usize) -> Result<Vec<MultiIndex>> {
    if n == 0 {
        return Err(PceError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let count = basis_size(n, p)?;
    if count > 50_000_000 {
        return Err(PceError::SizeOverflow { n, p });
    }
    let mut out = Vec::with_capacity(count);
    let mut current = vec![0u32; n];
    for d in 0..=p as u32 {
        fill_degree(&mut current, 0, d, &mut out);
    }
    Ok(out)
}

// descending lexicographic within a fixed degree
fn fill_degree(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    let n = current.len();
    if pos == n - 1 {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill_degree(current, pos + 1, remaining - e, out);
    }
    current[pos] = 0;
}

/// Dense ranking of all multi-indices of one dimension up to a maximum order,
/// consistent with the graded order above.
#[derive(Debug, Clone)]
pub struct IndexSpace {
    n: usize,
    max_order: u32,
    binom: Vec<Vec<usize>>,
}

impl IndexSpace {
    pub fn new(n: usize, max_order: u32) -> Self {
        let top = n + max_order as usize + 2;
        let mut binom = vec![vec![0usize; top + 1]; top + 1];
        for i in 0..=top {
            binom[i][0] = 1;
            for k in 1..=i {
                binom[i][k] = binom[i - 1][k - 1] + binom[i - 1][k];
            }
        }
        IndexSpace {
            n,
            max_order,
            binom,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    /// Number of indices with degree `<= max_order`.
    pub fn len(&self) -> usize {
        self.count_up_to(self.max_order)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn count_up_to(&self, p: u32) -> usize {
        self.binom[self.n + p as usize][self.n]
    }

    fn c(&self, n: usize, k: usize) -> usize {
        self.binom[n][k]
    }

    /// Rank of the exponent vector produced by `exps(l)` for `l in 0..n`.
    #[inline]
    pub fn rank_with<F: Fn(usize) -> u32>(&self, exps: F) -> usize {
        let n = self.n;
        let d: u32 = (0..n).map(&exps).sum();
        let mut r = if d == 0 {
            0
        } else {
            self.c(n + d as usize - 1, n)
        };
        let mut rem = d as usize;
        for l in 0..n.saturating_sub(1) {
            let a = exps(l) as usize;
            let k = n - l;
            if rem > a {
                r += self.c(rem - a + k - 2, k - 1);
            }
            rem -= a;
        }
        r
    }

    #[inline]
    pub fn rank(&self, idx: &MultiIndex) -> usize {
        self.rank_with(|l| idx.0[l])
    }

    #[inline]
    pub fn rank_of_sum(&self, a: &MultiIndex, b: &MultiIndex) -> usize {
        self.rank_with(|l| a.0[l] + b.0[l])
    }

    /// Every index of the space, in rank order.
    pub fn indices(&self) -> Vec<MultiIndex> {
        enumerate_basis_indices(self.n, self.max_order as usize)
            .expect("index space sized at construction")
    }
}

/// Sparse multivariate polynomial about a fixed origin.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    origin: Vec<f64>,
    terms: BTreeMap<MultiIndex, f64>,
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let shifted = self.origin.iter().any(|&o| o != 0.0);
        for (i, (idx, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (l, &e) in idx.0.iter().enumerate() {
                match (e, shifted) {
                    (0, _) => {}
                    (1, false) => write!(f, "*x{}", l + 1)?,
                    (_, false) => write!(f, "*x{}^{e}", l + 1)?,
                    (_, true) => write!(f, "*(x{}-{})^{e}", l + 1, self.origin[l])?,
                }
            }
        }
        Ok(())
    }
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            origin: vec![0.0; dim],
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::monomial(MultiIndex::zeros(dim), c)
    }

    /// `c * xi^idx` about the zero origin.
    pub fn monomial(idx: MultiIndex, c: f64) -> Self {
        let dim = idx.dim();
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(idx, c);
        }
        Polynomial {
            dim,
            origin: vec![0.0; dim],
            terms,
        }
    }

    /// The coordinate function `xi_l`.
    pub fn variable(dim: usize, l: usize) -> Self {
        Self::monomial(MultiIndex::unit(dim, l), 1.0)
    }

    /// Builds a polynomial about `origin`; exact zeros are dropped, duplicates summed.
    pub fn from_terms<I>(dim: usize, origin: Vec<f64>, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        if origin.len() != dim {
            return Err(PceError::DimensionMismatch {
                expected: dim,
                found: origin.len(),
            });
        }
        let mut map = BTreeMap::new();
        for (idx, c) in terms {
            if idx.dim() != dim {
                return Err(PceError::DimensionMismatch {
                    expected: dim,
                    found: idx.dim(),
                });
            }
            *map.entry(idx).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Polynomial {
            dim,
            origin,
            terms: map,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, idx: &MultiIndex) -> f64 {
        self.terms.get(idx).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Drops coefficients below `PRUNE_REL` times the largest magnitude.
    pub fn prune(&mut self) {
        let cut = PRUNE_REL * self.max_abs_coeff();
        self.terms.retain(|_, c| c.abs() >= cut && *c != 0.0);
    }

    pub fn scaled(&self, s: f64) -> Polynomial {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= s;
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    /// `self + s * other`, re-expanding `other` into this origin if needed.
    pub fn add_scaled(&self, other: &Polynomial, s: f64) -> Result<Polynomial> {
        check_dim(self.dim, other.dim)?;
        let other = other.recentered(&self.origin);
        let mut out = self.clone();
        for (idx, c) in other.terms {
            *out.terms.entry(idx).or_insert(0.0) += s * c;
        }
        out.prune();
        Ok(out)
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial> {
        self.add_scaled(other, -1.0)
    }

    pub fn evaluate(&self, xi: &[f64]) -> Result<f64> {
        check_dim(self.dim, xi.len())?;
        let z: Vec<f64> = xi.iter().zip(&self.origin).map(|(x, o)| x - o).collect();
        let mut acc = Accumulator::new();
        for (idx, c) in &self.terms {
            let mut m = *c;
            for (l, &e) in idx.0.iter().enumerate() {
                if e > 0 {
                    m *= z[l].powi(e as i32);
                }
            }
            acc.add(m);
        }
        Ok(acc.value())
    }

    /// The same function expanded about `new_origin`.
    pub fn recentered(&self, new_origin: &[f64]) -> Polynomial {
        assert_eq!(new_origin.len(), self.dim, "origin dimension");
        if new_origin == self.origin.as_slice() {
            return self.clone();
        }
        // (xi - o)^j = ((xi - o') + (o' - o))^j
        let delta: Vec<f64> = new_origin
            .iter()
            .zip(&self.origin)
            .map(|(n, o)| n - o)
            .collect();
        let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (idx, c) in &self.terms {
            let factors: Vec<Vec<(u32, f64)>> = idx
                .0
                .iter()
                .zip(&delta)
                .map(|(&e, &d)| shift_power(e, d))
                .collect();
            expand_product(&factors, 0, &mut vec![0; self.dim], *c, &mut map);
        }
        let mut out = Polynomial {
            dim: self.dim,
            origin: new_origin.to_vec(),
            terms: map,
        };
        out.prune();
        out
    }

    /// Replaces the origin without touching coefficients (reinterprets the polynomial).
    pub fn with_origin_unchecked(mut self, origin: Vec<f64>) -> Polynomial {
        assert_eq!(origin.len(), self.dim);
        self.origin = origin;
        self
    }
}

// (z + d)^e as a list of (power of z, coefficient)
fn shift_power(e: u32, d: f64) -> Vec<(u32, f64)> {
    if d == 0.0 {
        return vec![(e, 1.0)];
    }
    let mut out = Vec::with_capacity(e as usize + 1);
    let mut binom = 1.0;
    for k in (0..=e).rev() {
        // coefficient of z^k is C(e, k) d^{e-k}
        out.push((k, binom * d.powi((e - k) as i32)));
        binom = binom * k as f64 / (e - k + 1) as f64;
    }
    out
}

fn expand_product(
    factors: &[Vec<(u32, f64)>],
    pos: usize,
    current: &mut Vec<u32>,
    coeff: f64,
    out: &mut BTreeMap<MultiIndex, f64>,
) {
    if pos == factors.len() {
        *out.entry(MultiIndex(current.clone())).or_insert(0.0) += coeff;
        return;
    }
    for &(k, c) in &factors[pos] {
        if c == 0.0 {
            continue;
        }
        current[pos] = k;
        expand_product(factors, pos + 1, current, coeff * c, out);
    }
    current[pos] = 0;
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(PceError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Product of two polynomials; `b` is re-expanded into `a`'s origin if needed.
pub fn poly_product(a: &Polynomial, b: &Polynomial) -> Result<Polynomial> {
    check_dim(a.dim, b.dim)?;
    let b = b.recentered(&a.origin);
    let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
    for (ia, ca) in &a.terms {
        for (ib, cb) in &b.terms {
            *map.entry(ia.add(ib)).or_insert(0.0) += ca * cb;
        }
    }
    let mut out = Polynomial {
        dim: a.dim,
        origin: a.origin.clone(),
        terms: map,
    };
    out.prune();
    Ok(out)
}

/// `E[poly]` as a sum of moments from `table`.
pub fn expectation(poly: &Polynomial, table: &MomentTable) -> Result<f64> {
    check_dim(table.dimension(), poly.dim)?;
    let local;
    let poly = if poly.origin.as_slice() == table.center() {
        poly
    } else {
        local = poly.recentered(table.center());
        &local
    };
    let deg = poly.degree();
    if deg > table.max_order() {
        return Err(PceError::TableTooSmall {
            required: deg,
            available: table.max_order(),
        });
    }
    let mut acc = Accumulator::new();
    for (idx, c) in &poly.terms {
        acc.add_prod(*c, table.value_at(table.space().rank(idx)));
    }
    Ok(acc.value())
}

/// `E[a * b]` without forming the product, in double-double precision.
/// Both polynomials must already be expanded about the table center.
pub(crate) fn inner_product_centered(a: &Polynomial, b: &Polynomial, table: &MomentTable) -> f64 {
    let space = table.space();
    let mut acc = Accumulator::new();
    for (ia, ca) in &a.terms {
        for (ib, cb) in &b.terms {
            acc.add_prod3(*ca, *cb, table.value_at(space.rank_of_sum(ia, ib)));
        }
    }
    acc.value()
}

/// `E[a * b]` for arbitrary origins.
pub fn inner_product(a: &Polynomial, b: &Polynomial, table: &MomentTable) -> Result<f64> {
    check_dim(table.dimension(), a.dim)?;
    check_dim(table.dimension(), b.dim)?;
    let a = a.recentered(table.center());
    let b = b.recentered(table.center());
    let required = a.degree() + b.degree();
    if required > table.max_order() {
        return Err(PceError::TableTooSmall {
            required,
            available: table.max_order(),
        });
    }
    Ok(inner_product_centered(&a, &b, table))
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    index: MultiIndex,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    dim: usize,
    origin: Vec<f64>,
    terms: Vec<TermRepr>,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyRepr {
            dim: self.dim,
            origin: self.origin.clone(),
            terms: self
                .terms
                .iter()
                .map(|(index, coeff)| TermRepr {
                    index: index.clone(),
                    coeff: *coeff,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PolyRepr::deserialize(d)?;
        Polynomial::from_terms(
            repr.dim,
            repr.origin,
            repr.terms.into_iter().map(|t| (t.index, t.coeff)),
        )
        .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::gaussian_moment_table;

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    fn poly(terms: &[(&[u32], f64)]) -> Polynomial {
        let dim = terms[0].0.len();
        Polynomial::from_terms(dim, vec![0.0; dim], terms.iter().map(|(e, c)| (mi(e), *c))).unwrap()
    }

    #[test]
    fn enumerate_counts_and_order() {
        let two = enumerate_basis_indices(2, 2).unwrap();
        assert_eq!(two.len(), 6);
        assert_eq!(
            two,
            vec![
                mi(&[0, 0]),
                mi(&[1, 0]),
                mi(&[0, 1]),
                mi(&[2, 0]),
                mi(&[1, 1]),
                mi(&[0, 2])
            ]
        );
        let one = enumerate_basis_indices(1, 4).unwrap();
        assert_eq!(one, (0..=4).map(|k| mi(&[k])).collect::<Vec<_>>());
        assert_eq!(enumerate_basis_indices(3, 2).unwrap().len(), 10);
    }

    #[test]
    fn enumerate_matches_binomial_count() {
        for n in 1..=5 {
            for p in 0..=8 {
                let idx = enumerate_basis_indices(n, p).unwrap();
                assert_eq!(idx.len(), basis_size(n, p).unwrap());
                assert!(idx.windows(2).all(|w| w[0] < w[1]));
                assert!(idx.iter().all(|i| i.degree() as usize <= p));
            }
        }
    }

    #[test]
    fn size_overflow_is_reported() {
        assert!(matches!(
            enumerate_basis_indices(200, 200),
            Err(PceError::SizeOverflow { .. })
        ));
    }

    #[test]
    fn rank_agrees_with_enumeration() {
        for n in 1..=4 {
            let space = IndexSpace::new(n, 7);
            for (r, idx) in space.indices().iter().enumerate() {
                assert_eq!(space.rank(idx), r, "{idx:?}");
            }
            assert_eq!(space.len(), basis_size(n, 7).unwrap());
        }
    }

    #[test]
    fn product_examples() {
        let one = Polynomial::constant(2, 1.0);
        let x1x2 = poly(&[(&[1, 1], 1.0)]);
        assert_eq!(poly_product(&one, &x1x2).unwrap(), x1x2);

        let a = poly(&[(&[1], 1.0), (&[0], -1.0)]);
        let b = poly(&[(&[1], 1.0), (&[0], 1.0)]);
        let ab = poly_product(&a, &b).unwrap();
        assert_eq!(ab, poly(&[(&[2], 1.0), (&[0], -1.0)]));

        let sq = poly_product(&ab, &ab).unwrap();
        assert_eq!(sq, poly(&[(&[4], 1.0), (&[2], -2.0), (&[0], 1.0)]));
        assert_eq!(sq.degree(), 4);
    }

    #[test]
    fn product_dimension_mismatch() {
        let a = Polynomial::constant(1, 1.0);
        let b = Polynomial::constant(2, 1.0);
        assert!(matches!(
            poly_product(&a, &b),
            Err(PceError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn recentering_preserves_values() {
        let p = poly(&[
            (&[2, 1], 1.5),
            (&[0, 3], -0.5),
            (&[1, 0], 2.0),
            (&[0, 0], 0.25),
        ]);
        let q = p.recentered(&[1.0, -0.5]);
        for pt in [[0.3, 0.7], [1.0, 1.0], [-2.0, 0.5]] {
            let a = p.evaluate(&pt).unwrap();
            let b = q.evaluate(&pt).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
        let back = q.recentered(&[0.0, 0.0]);
        for (idx, c) in p.terms() {
            assert!((back.coeff(idx) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_examples() {
        let s = 0.25f64;
        let cov = [[s * s, 0.5 * s * s], [0.5 * s * s, s * s]];
        let table = gaussian_moment_table(&[1.0, 1.0], &cov, 4).unwrap();
        assert_eq!(
            expectation(&Polynomial::constant(2, 1.0), &table).unwrap(),
            1.0
        );
        let x1x2 = poly(&[(&[1, 1], 1.0)]);
        assert!((expectation(&x1x2, &table).unwrap() - 1.03125).abs() < 1e-15);

        let std_normal = gaussian_moment_table(&[0.0], &[[1.0]], 4).unwrap();
        let he2 = poly(&[(&[2], 1.0), (&[0], -1.0)]);
        assert_eq!(expectation(&he2, &std_normal).unwrap(), 0.0);
    }

    #[test]
    fn expectation_needs_large_enough_table() {
        let table = gaussian_moment_table(&[0.0], &[[1.0]], 2).unwrap();
        let p = Polynomial::monomial(mi(&[3]), 1.0);
        assert!(matches!(
            expectation(&p, &table),
            Err(PceError::TableTooSmall {
                required: 3,
                available: 2
            })
        ));
    }
}
