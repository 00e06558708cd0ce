//! Orthogonal polynomial bases built by Gram-Schmidt under a moment table.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::compensated::Accumulator;
use crate::error::{PceError, Result};
use crate::moments::MomentTable;
use crate::polyalg::{basis_size, enumerate_basis_indices, inner_product, MultiIndex, Polynomial};

/// Normalized cross inner products above this fail orthogonality checks.
pub const ORTHO_TOL: f64 = 1e-9;

/// Largest order accepted unless [`BasisOptions::allow_high_order`] is set.
pub const DEFAULT_ORDER_CAP: u32 = 10;

#[derive(Debug, Clone, Copy, Default)]
pub struct BasisOptions {
    pub allow_high_order: bool,
}

/// `Phi_0 .. Phi_N`, their squared norms and the monic indices they started from.
///
/// Polynomials are expanded about the generating table's center.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    dimension: usize,
    order: u32,
    indices: Vec<MultiIndex>,
    polys: Vec<Polynomial>,
    sq_norms: Vec<f64>,
    table_hash: String,
}

impl OrthoBasis {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn polys(&self) -> &[Polynomial] {
        &self.polys
    }

    pub fn sq_norms(&self) -> &[f64] {
        &self.sq_norms
    }

    /// Content hash of the moment table the basis is orthogonal under.
    pub fn table_hash(&self) -> &str {
        &self.table_hash
    }

    pub fn center(&self) -> &[f64] {
        self.polys[0].origin()
    }

    pub fn position(&self, idx: &MultiIndex) -> Option<usize> {
        self.indices.iter().position(|i| i == idx)
    }

    /// `Phi_j(xi)` for every member.
    pub fn evaluate_all(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.polys.iter().map(|p| p.evaluate(xi)).collect()
    }

    pub fn matches(&self, table: &MomentTable) -> bool {
        self.table_hash == table.content_hash()
    }

    /// Attaches the basis to `table` after checking it is orthogonal there.
    pub fn bound_to(mut self, table: &MomentTable) -> Result<OrthoBasis> {
        let res = orthogonality_residual(&self, table)?;
        if res > ORTHO_TOL {
            return Err(PceError::InvalidIndexSet(format!(
                "basis is not orthogonal under the table (residual {res:e})"
            )));
        }
        let centered: Vec<Polynomial> = self
            .polys
            .iter()
            .map(|p| p.recentered(table.center()))
            .collect();
        self.sq_norms = centered
            .iter()
            .map(|p| inner_product(p, p, table))
            .collect::<Result<_>>()?;
        self.polys = centered;
        self.table_hash = table.content_hash();
        Ok(self)
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &BasisRepr::from(self))?;
        Ok(())
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let repr: BasisRepr = serde_json::from_reader(r)?;
        repr.try_into()
    }
}

fn check_index_set(indices: &[MultiIndex], n: usize) -> Result<u32> {
    let first = indices
        .first()
        .ok_or_else(|| PceError::InvalidIndexSet("empty index set".into()))?;
    if !first.is_zero() {
        return Err(PceError::InvalidIndexSet("first index must be zero".into()));
    }
    let mut seen = HashMap::with_capacity(indices.len());
    let mut last_degree = 0;
    for (pos, idx) in indices.iter().enumerate() {
        if idx.dim() != n {
            return Err(PceError::DimensionMismatch {
                expected: n,
                found: idx.dim(),
            });
        }
        if idx.degree() < last_degree {
            return Err(PceError::InvalidIndexSet(format!(
                "{idx} breaks graded order"
            )));
        }
        last_degree = idx.degree();
        if seen.insert(idx.clone(), pos).is_some() {
            return Err(PceError::InvalidIndexSet(format!("{idx} appears twice")));
        }
    }
    for idx in indices {
        for l in 0..n {
            if idx.get(l) > 0 {
                let mut e = idx.exponents().to_vec();
                e[l] -= 1;
                if !seen.contains_key(&MultiIndex::new(e)) {
                    return Err(PceError::InvalidIndexSet(format!(
                        "{idx} has a missing divisor"
                    )));
                }
            }
        }
    }
    let p = last_degree;
    let complete = basis_size(n, p as usize)?;
    if indices.len() != complete {
        return Err(PceError::InvalidIndexSet(format!(
            "{} indices given, total degree {p} needs {complete}",
            indices.len()
        )));
    }
    Ok(p)
}

/// Gram-Schmidt with default options.
pub fn gram_schmidt_basis(indices: &[MultiIndex], table: &MomentTable) -> Result<OrthoBasis> {
    gram_schmidt_basis_with(indices, table, BasisOptions::default())
}

/// `Phi_j = e_j - sum_{k<j} c_jk Phi_k`, `c_jk = <e_j, Phi_k> / <Phi_k, Phi_k>`,
/// as modified Gram-Schmidt followed by one re-orthogonalization pass.
///
/// The index set must be a complete total-degree set in graded order (any
/// order within a degree). Work happens in monomials of `xi - center`;
/// because every lower-degree divisor precedes `e_j`, the result is the same
/// function as the raw-monomial recurrence.
pub fn gram_schmidt_basis_with(
    indices: &[MultiIndex],
    table: &MomentTable,
    options: BasisOptions,
) -> Result<OrthoBasis> {
    let n = table.dimension();
    let p = check_index_set(indices, n)?;
    if p > DEFAULT_ORDER_CAP && !options.allow_high_order {
        return Err(PceError::OrderCap {
            requested: p,
            cap: DEFAULT_ORDER_CAP,
        });
    }
    if 2 * p > table.max_order() {
        return Err(PceError::TableTooSmall {
            required: 2 * p,
            available: table.max_order(),
        });
    }
    let k = indices.len();
    let space = table.space();
    let gram: Vec<Vec<f64>> = indices
        .iter()
        .map(|a| {
            indices
                .iter()
                .map(|b| table.value_at(space.rank_of_sum(a, b)))
                .collect()
        })
        .collect();
    let ip = |u: &[f64], w: &[f64], ulen: usize, wlen: usize| {
        let mut acc = Accumulator::new();
        for a in 0..ulen {
            if u[a] == 0.0 {
                continue;
            }
            for b in 0..wlen {
                acc.add_prod3(u[a], w[b], gram[a][b]);
            }
        }
        acc.value()
    };

    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut norms: Vec<f64> = Vec::with_capacity(k);
    for j in 0..k {
        let mut w = vec![0.0; k];
        w[j] = 1.0;
        for _pass in 0..2 {
            for m in 0..j {
                let c = ip(&w, &coeffs[m], j + 1, m + 1) / norms[m];
                if c != 0.0 {
                    for (wi, vi) in w.iter_mut().zip(&coeffs[m]).take(m + 1) {
                        *wi -= c * vi;
                    }
                }
            }
        }
        w[j] = 1.0;
        let norm = ip(&w, &w, j + 1, j + 1);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(PceError::IllConditioned {
                degree: indices[j].degree(),
                index: indices[j].to_string(),
            });
        }
        coeffs.push(w);
        norms.push(norm);
    }

    let center = table.center().to_vec();
    let polys = coeffs
        .iter()
        .map(|w| {
            Polynomial::from_terms(
                n,
                center.clone(),
                indices.iter().cloned().zip(w.iter().copied()),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    norms[0] = 1.0;
    Ok(OrthoBasis {
        dimension: n,
        order: p,
        indices: indices.to_vec(),
        polys,
        sq_norms: norms,
        table_hash: table.content_hash(),
    })
}

/// Canonical graded basis of total degree `p`.
pub fn build_basis(table: &MomentTable, p: u32) -> Result<OrthoBasis> {
    let indices = enumerate_basis_indices(table.dimension(), p as usize)?;
    gram_schmidt_basis(&indices, table)
}

/// `max_{i != j} |<Phi_i, Phi_j>| / (|Phi_i| |Phi_j|)`, with all inner products
/// and norms recomputed from `table`.
pub fn orthogonality_residual(basis: &OrthoBasis, table: &MomentTable) -> Result<f64> {
    let polys: Vec<Polynomial> = basis
        .polys
        .iter()
        .map(|p| p.recentered(table.center()))
        .collect();
    let norms = polys
        .iter()
        .map(|p| inner_product(p, p, table))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for i in 0..polys.len() {
        for j in 0..i {
            let v = inner_product(&polys[i], &polys[j], table)?;
            worst = worst.max(v.abs() / (norms[i] * norms[j]).sqrt());
        }
    }
    Ok(worst)
}

/// Expansion coefficients `xi_{l,j} = <xi_l, Phi_j> / <Phi_j, Phi_j>` of each input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputExpansion {
    pub coefficients: Vec<Vec<f64>>,
    /// False when the basis has no degree-one members and only the mean survives.
    pub exact: bool,
}

impl InputExpansion {
    /// `sum_j xi_{l,j} Phi_j` as a polynomial.
    pub fn reconstruct(&self, basis: &OrthoBasis, l: usize) -> Polynomial {
        let mut out = Polynomial::zero(basis.dimension()).recentered(basis.center());
        for (c, phi) in self.coefficients[l].iter().zip(basis.polys()) {
            if *c != 0.0 {
                out = out.add_scaled(phi, *c).expect("basis dimension");
            }
        }
        out
    }
}

pub fn input_expansion(basis: &OrthoBasis, table: &MomentTable) -> Result<InputExpansion> {
    let n = basis.dimension();
    let mut coefficients = Vec::with_capacity(n);
    for l in 0..n {
        let x = Polynomial::variable(n, l);
        if basis.order() == 0 {
            coefficients.push(vec![inner_product(&x, &basis.polys[0], table)?]);
            continue;
        }
        let row = basis
            .polys
            .iter()
            .zip(&basis.sq_norms)
            .map(|(phi, nn)| Ok(inner_product(&x, phi, table)? / nn))
            .collect::<Result<Vec<f64>>>()?;
        coefficients.push(row);
    }
    if basis.order() == 0 {
        log::warn!("order-0 basis cannot represent the inputs; keeping only their means");
    }
    Ok(InputExpansion {
        coefficients,
        exact: basis.order() > 0,
    })
}

/// Monic probabilists' Hermite coefficients `He_k(x) = sum_m c_m x^m`.
fn hermite_coeffs(k: u32) -> Vec<f64> {
    let mut prev = vec![1.0];
    if k == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for m in 1..k {
        // He_{m+1} = x He_m - m He_{m-1}
        let mut next = vec![0.0; cur.len() + 1];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= m as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Tensor products `prod_l std_l^{j_l} He_{j_l}((xi_l - mean_l) / std_l)`, the
/// orthogonal basis of independent Gaussians in closed form. The result is
/// not tied to a table until [`OrthoBasis::bound_to`] is called.
pub fn hermite_tensor_basis(mean: &[f64], std: &[f64], p: u32) -> Result<OrthoBasis> {
    let n = mean.len();
    if std.len() != n {
        return Err(PceError::DimensionMismatch {
            expected: n,
            found: std.len(),
        });
    }
    let indices = enumerate_basis_indices(n, p as usize)?;
    let uni: Vec<Vec<f64>> = (0..=p).map(hermite_coeffs).collect();
    let mut polys = Vec::with_capacity(indices.len());
    let mut sq_norms = Vec::with_capacity(indices.len());
    for idx in &indices {
        let mut terms = vec![(MultiIndex::zeros(n), 1.0)];
        let mut norm = 1.0;
        for l in 0..n {
            let k = idx.get(l);
            norm *= std[l].powi(2 * k as i32) * (1..=k).map(f64::from).product::<f64>();
            let mut next = Vec::new();
            for (base, c) in &terms {
                for (m, h) in uni[k as usize].iter().enumerate() {
                    if *h == 0.0 {
                        continue;
                    }
                    let mut e = base.exponents().to_vec();
                    e[l] = m as u32;
                    next.push((MultiIndex::new(e), c * h * std[l].powi(k as i32 - m as i32)));
                }
            }
            terms = next;
        }
        polys.push(Polynomial::from_terms(n, mean.to_vec(), terms)?);
        sq_norms.push(norm);
    }
    Ok(OrthoBasis {
        dimension: n,
        order: p,
        indices,
        polys,
        sq_norms,
        table_hash: String::new(),
    })
}

#[derive(Serialize, Deserialize)]
struct MemberRepr {
    index: MultiIndex,
    sq_norm: f64,
    poly: Polynomial,
}

#[derive(Serialize, Deserialize)]
struct BasisRepr {
    dimension: usize,
    order: u32,
    table_hash: String,
    members: Vec<MemberRepr>,
}

impl From<&OrthoBasis> for BasisRepr {
    fn from(b: &OrthoBasis) -> Self {
        BasisRepr {
            dimension: b.dimension,
            order: b.order,
            table_hash: b.table_hash.clone(),
            members: b
                .indices
                .iter()
                .zip(&b.polys)
                .zip(&b.sq_norms)
                .map(|((index, poly), sq_norm)| MemberRepr {
                    index: index.clone(),
                    sq_norm: *sq_norm,
                    poly: poly.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<BasisRepr> for OrthoBasis {
    type Error = PceError;

    fn try_from(r: BasisRepr) -> Result<Self> {
        let indices: Vec<MultiIndex> = r.members.iter().map(|m| m.index.clone()).collect();
        let p = check_index_set(&indices, r.dimension)?;
        if p != r.order {
            return Err(PceError::InvalidIndexSet(format!(
                "order {} but members reach {p}",
                r.order
            )));
        }
        if r.members
            .iter()
            .any(|m| !(m.sq_norm > 0.0) || m.poly.dim() != r.dimension)
        {
            return Err(PceError::InvalidIndexSet("bad basis member".into()));
        }
        Ok(OrthoBasis {
            dimension: r.dimension,
            order: r.order,
            indices,
            sq_norms: r.members.iter().map(|m| m.sq_norm).collect(),
            polys: r.members.into_iter().map(|m| m.poly).collect(),
            table_hash: r.table_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::gaussian_moment_table;

    fn std_normal(n: usize, order: u32) -> MomentTable {
        let cov: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        gaussian_moment_table(&vec![0.0; n], &cov, order).unwrap()
    }

    fn decay_table(rho: f64, order: u32) -> MomentTable {
        let v = 0.0625;
        gaussian_moment_table(&[1.0, 1.0], &[[v, rho * v], [rho * v, v]], order).unwrap()
    }

    #[test]
    fn quadratic_hermite_member() {
        let t = std_normal(2, 4);
        let b = build_basis(&t, 2).unwrap();
        assert_eq!(b.len(), 6);
        let phi = &b.polys()[b.position(&MultiIndex::new(vec![2, 0])).unwrap()];
        assert_eq!(phi.coeff(&MultiIndex::new(vec![2, 0])), 1.0);
        assert!((phi.coeff(&MultiIndex::zeros(2)) + 1.0).abs() < 1e-15);
        assert_eq!(phi.len(), 2);
    }

    #[test]
    fn first_member_is_one() {
        let b = build_basis(&decay_table(0.5, 8), 4).unwrap();
        assert_eq!(
            b.polys()[0],
            Polynomial::constant(2, 1.0).recentered(&[1.0, 1.0])
        );
        assert_eq!(b.sq_norms()[0], 1.0);
    }

    #[test]
    fn monic_leading_coefficient_in_raw_frame() {
        let b = build_basis(&decay_table(-0.9, 12), 6).unwrap();
        for (idx, phi) in b.indices().iter().zip(b.polys()) {
            let raw = phi.recentered(&[0.0, 0.0]);
            assert!((raw.coeff(idx) - 1.0).abs() < 1e-12, "{idx}");
        }
    }

    #[test]
    fn residual_of_single_member_is_zero() {
        let t = decay_table(0.0, 2);
        let b = build_basis(&t, 0).unwrap();
        assert_eq!(orthogonality_residual(&b, &t).unwrap(), 0.0);
    }

    #[test]
    fn table_too_small() {
        assert!(matches!(
            build_basis(&decay_table(0.0, 5), 3),
            Err(PceError::TableTooSmall { required: 6, .. })
        ));
    }

    #[test]
    fn order_cap() {
        let t = std_normal(1, 24);
        assert!(matches!(
            build_basis(&t, 11),
            Err(PceError::OrderCap { .. })
        ));
        let idx = enumerate_basis_indices(1, 11).unwrap();
        assert!(gram_schmidt_basis_with(
            &idx,
            &t,
            BasisOptions {
                allow_high_order: true
            }
        )
        .is_ok());
    }

    #[test]
    fn index_set_checks() {
        let t = decay_table(0.0, 4);
        let bad = vec![
            MultiIndex::zeros(2),
            MultiIndex::new(vec![1, 0]),
            MultiIndex::new(vec![2, 0]),
        ];
        assert!(gram_schmidt_basis(&bad, &t).is_err());
        let unordered = vec![
            MultiIndex::zeros(2),
            MultiIndex::new(vec![1, 1]),
            MultiIndex::new(vec![1, 0]),
            MultiIndex::new(vec![0, 1]),
        ];
        assert!(gram_schmidt_basis(&unordered, &t).is_err());
    }

    #[test]
    fn point_mass_is_ill_conditioned() {
        let t = MomentTable::from_values(
            vec![0.0],
            4,
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            crate::moments::Provenance::Empirical { samples: 1 },
        )
        .unwrap();
        assert!(matches!(
            build_basis(&t, 1),
            Err(PceError::IllConditioned { degree: 1, .. })
        ));
    }

    #[test]
    fn input_expansion_examples() {
        let t = std_normal(2, 4);
        let b = build_basis(&t, 2).unwrap();
        let e = input_expansion(&b, &t).unwrap();
        assert!(e.exact);
        assert_eq!(e.coefficients[0][0], 0.0);
        assert!((e.coefficients[0][1] - 1.0).abs() < 1e-15);

        let t = decay_table(0.5, 8);
        let b = build_basis(&t, 3).unwrap();
        let e = input_expansion(&b, &t).unwrap();
        for l in 0..2 {
            assert!((e.coefficients[l][0] - 1.0).abs() < 1e-14);
            let parseval: f64 = e.coefficients[l]
                .iter()
                .zip(b.sq_norms())
                .map(|(c, n)| c * c * n)
                .sum();
            assert!((parseval - 1.0625).abs() < 1e-10);
        }

        let b0 = build_basis(&t, 0).unwrap();
        let e0 = input_expansion(&b0, &t).unwrap();
        assert!(!e0.exact);
        assert_eq!(e0.coefficients[1], vec![1.0]);
    }

    #[test]
    fn json_round_trip() {
        let t = decay_table(-0.5, 8);
        let b = build_basis(&t, 4).unwrap();
        let mut buf = Vec::new();
        b.to_json(&mut buf).unwrap();
        let back = OrthoBasis::from_json(buf.as_slice()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn hermite_binding() {
        let t = decay_table(0.0, 12);
        let h = hermite_tensor_basis(&[1.0, 1.0], &[0.25, 0.25], 6).unwrap();
        let h = h.bound_to(&t).unwrap();
        assert!(h.matches(&t));
        let t5 = decay_table(0.5, 12);
        assert!(hermite_tensor_basis(&[1.0, 1.0], &[0.25, 0.25], 2)
            .unwrap()
            .bound_to(&t5)
            .is_err());
    }
}
