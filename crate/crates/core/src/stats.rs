//! Mean, standard deviation and Sobol' indices of an expanded solution.
//!
//! Sobol' terms follow the correlated-input decomposition: the expansion is
//! rewritten in monomials, each subset function `M_l` is built from
//! marginal expectations `E[e_j | xi_l] = mu^{j_-l} prod_{k in l} xi_k^{j_k}`
//! minus all lower subset functions, and every variance or covariance is a
//! sum over the same moment table. `S_l = Cov[M_l, u] / Var[u]` splits into
//! `S^u_l = Var[M_l] / Var[u]` and `S^c_l = Cov[M_l, u - M_l] / Var[u]`.

use std::io::Write;

use serde::Serialize;

use crate::basis::OrthoBasis;
use crate::compensated::Accumulator;
use crate::error::{PceError, Result};
use crate::galerkin::ExpandedSolution;
use crate::moments::MomentTable;
use crate::polyalg::{MultiIndex, Polynomial};

/// Variances below this leave the indices undefined.
pub const UNDEFINED_VARIANCE: f64 = 1e-14;

/// Largest input dimension for subset enumeration.
pub const MAX_SOBOL_DIM: usize = 6;

fn check_basis(solution: &ExpandedSolution, basis: &OrthoBasis) -> Result<()> {
    if basis.len() != solution.basis_len() || basis.table_hash() != solution.table_hash() {
        return Err(PceError::TableMismatch);
    }
    Ok(())
}

/// `u_{s,0}(t)` per state, indexed `[state][time]`.
pub fn mean_series(solution: &ExpandedSolution) -> Vec<Vec<f64>> {
    (0..solution.n_states())
        .map(|s| {
            (0..solution.times().len())
                .map(|ti| solution.coefficient(ti, s, 0))
                .collect()
        })
        .collect()
}

/// `sum_{i>=1} u_i^2 |Phi_i|^2` for one coefficient vector.
pub fn variance_of(coeffs: &[f64], basis: &OrthoBasis) -> f64 {
    let mut acc = Accumulator::new();
    for (u, n) in coeffs.iter().zip(basis.sq_norms()).skip(1) {
        acc.add_prod(u * u, *n);
    }
    acc.value().max(0.0)
}

/// Standard deviation per state, indexed `[state][time]`.
pub fn std_series(solution: &ExpandedSolution, basis: &OrthoBasis) -> Result<Vec<Vec<f64>>> {
    check_basis(solution, basis)?;
    Ok((0..solution.n_states())
        .map(|s| {
            (0..solution.times().len())
                .map(|ti| variance_of(solution.state_coefficients(ti, s), basis).sqrt())
                .collect()
        })
        .collect())
}

/// Non-empty subsets of `n` variables as bit masks, by size then value.
pub fn subsets(n: usize) -> Vec<u32> {
    let mut all: Vec<u32> = (1..(1u32 << n)).collect();
    all.sort_by_key(|m| (m.count_ones(), *m));
    all
}

/// `"1"`, `"2"`, `"12"`, ... with one-based variable numbers.
pub fn subset_label(mask: u32) -> String {
    (0..32)
        .filter(|l| mask >> l & 1 == 1)
        .map(|l| (l + 1).to_string())
        .collect()
}

/// `E[e_j | xi_l]` as a raw-frame polynomial: the raw moment of the
/// exponents outside `subset` times the monomial of those inside.
pub fn marginal_expectation_monic(
    j: &MultiIndex,
    subset: u32,
    table: &MomentTable,
) -> Result<Polynomial> {
    let outside = j.restrict(!subset);
    let inside = j.restrict(subset);
    Ok(Polynomial::monomial(inside, table.raw_moment(&outside)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolEntry {
    pub subset: u32,
    pub s: f64,
    pub s_u: f64,
    pub s_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolPoint {
    pub t: f64,
    pub state: usize,
    pub variance: f64,
    /// False when the variance is too small for the indices to mean anything;
    /// all index values are then zero.
    pub defined: bool,
    pub subsets: Vec<SobolEntry>,
    /// One entry per variable, `subset` holding its single bit.
    pub totals: Vec<SobolEntry>,
}

impl SobolPoint {
    pub fn subset(&self, mask: u32) -> Option<&SobolEntry> {
        self.subsets.iter().find(|e| e.subset == mask)
    }

    pub fn sum(&self) -> f64 {
        self.subsets.iter().map(|e| e.s).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolReport {
    pub dimension: usize,
    pub state_names: Vec<String>,
    pub points: Vec<SobolPoint>,
}

impl SobolReport {
    pub fn point(&self, state: usize, t: f64) -> Option<&SobolPoint> {
        self.points.iter().find(|p| p.state == state && p.t == t)
    }

    /// `t,state,subset,S,S_u,S_c`; undefined points print `undefined`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write(w, false)
    }

    /// `t,state,variable,S_T,S_T_u,S_T_c`.
    pub fn write_totals_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write(w, true)
    }

    fn write<W: Write>(&self, w: W, totals: bool) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        if totals {
            csv.write_record(["t", "state", "variable", "S_T", "S_T_u", "S_T_c"])?;
        } else {
            csv.write_record(["t", "state", "subset", "S", "S_u", "S_c"])?;
        }
        for p in &self.points {
            let entries = if totals { &p.totals } else { &p.subsets };
            for e in entries {
                let vals: [String; 3] = if p.defined {
                    [e.s, e.s_u, e.s_c].map(|v| v.to_string())
                } else {
                    std::array::from_fn(|_| "undefined".to_string())
                };
                csv.write_record([
                    p.t.to_string(),
                    self.state_names[p.state].clone(),
                    subset_label(e.subset),
                    vals[0].clone(),
                    vals[1].clone(),
                    vals[2].clone(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

// Everything about the basis and table that does not depend on the coefficients.
struct SobolPlan {
    n: usize,
    len: usize,
    // Monic coefficients of Phi_i about the table center, by rank.
    monic: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
    // Per subset, per rank: (rank kept inside the subset, moment outside it).
    marginal: Vec<(u32, Vec<(usize, f64)>)>,
    sq_norms: Vec<f64>,
}

impl SobolPlan {
    fn new(basis: &OrthoBasis, table: &MomentTable) -> Result<Self> {
        if !basis.matches(table) {
            return Err(PceError::TableMismatch);
        }
        let n = basis.dimension();
        if n > MAX_SOBOL_DIM {
            return Err(PceError::Config(format!(
                "Sobol' subsets are limited to {MAX_SOBOL_DIM} variables"
            )));
        }
        let p = basis.order();
        if 2 * p > table.max_order() {
            return Err(PceError::TableTooSmall {
                required: 2 * p,
                available: table.max_order(),
            });
        }
        let space = table.space();
        let len = space.count_up_to(p);
        let indices: Vec<MultiIndex> = space.indices().into_iter().take(len).collect();
        let monic = basis
            .polys()
            .iter()
            .map(|phi| {
                let mut row = vec![0.0; len];
                for (idx, c) in phi.terms() {
                    row[space.rank(idx)] = c;
                }
                row
            })
            .collect();
        let gram = indices
            .iter()
            .map(|a| {
                indices
                    .iter()
                    .map(|b| table.value_at(space.rank_of_sum(a, b)))
                    .collect()
            })
            .collect();
        let marginal = subsets(n)
            .into_iter()
            .map(|mask| {
                let map = indices
                    .iter()
                    .map(|a| {
                        let keep = space.rank(&a.restrict(mask));
                        let out = table.value_at(space.rank(&a.restrict(!mask)));
                        (keep, out)
                    })
                    .collect();
                (mask, map)
            })
            .collect();
        Ok(SobolPlan {
            n,
            len,
            monic,
            gram,
            marginal,
            sq_norms: basis.sq_norms().to_vec(),
        })
    }

    fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = Accumulator::new();
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                if y != 0.0 {
                    acc.add_prod3(x, y, self.gram[i][j]);
                }
            }
        }
        acc.value()
    }

    fn linear(&self, a: &[f64]) -> f64 {
        let mut acc = Accumulator::new();
        for (x, g) in a.iter().zip(&self.gram[0]) {
            acc.add_prod(*x, *g);
        }
        acc.value()
    }

    fn point(&self, coeffs: &[f64], t: f64, state: usize) -> SobolPoint {
        let mut var = Accumulator::new();
        for (u, nn) in coeffs.iter().zip(&self.sq_norms).skip(1) {
            var.add_prod(u * u, *nn);
        }
        let variance = var.value();
        let blank = |mask| SobolEntry {
            subset: mask,
            s: 0.0,
            s_u: 0.0,
            s_c: 0.0,
        };
        if !(variance >= UNDEFINED_VARIANCE) {
            return SobolPoint {
                t,
                state,
                variance,
                defined: false,
                subsets: self.marginal.iter().map(|(m, _)| blank(*m)).collect(),
                totals: (0..self.n).map(|l| blank(1 << l)).collect(),
            };
        }

        let mut u = vec![0.0; self.len];
        for (c, row) in coeffs.iter().zip(&self.monic) {
            for (a, r) in u.iter_mut().zip(row) {
                *a += c * r;
            }
        }
        let mean_u = self.linear(&u);
        let mut mean_const = vec![0.0; self.len];
        mean_const[0] = mean_u;

        let mut done: Vec<(u32, Vec<f64>)> = vec![(0, mean_const)];
        let mut entries = Vec::with_capacity(self.marginal.len());
        for (mask, map) in &self.marginal {
            let mut m = vec![0.0; self.len];
            for (a, &(keep, out)) in u.iter().zip(map) {
                m[keep] += a * out;
            }
            for (sub, ms) in &done {
                if sub & mask == *sub && sub != mask {
                    for (x, y) in m.iter_mut().zip(ms) {
                        *x -= y;
                    }
                }
            }
            let em = self.linear(&m);
            let var_m = self.bilinear(&m, &m) - em * em;
            let cov = self.bilinear(&m, &u) - em * mean_u;
            entries.push(SobolEntry {
                subset: *mask,
                s: cov / variance,
                s_u: var_m / variance,
                s_c: (cov - var_m) / variance,
            });
            done.push((*mask, m));
        }
        let totals = (0..self.n)
            .map(|l| {
                let bit = 1u32 << l;
                let mut e = blank(bit);
                for x in entries.iter().filter(|x| x.subset & bit != 0) {
                    e.s += x.s;
                    e.s_u += x.s_u;
                    e.s_c += x.s_c;
                }
                e
            })
            .collect();
        SobolPoint {
            t,
            state,
            variance,
            defined: true,
            subsets: entries,
            totals,
        }
    }
}

/// Sobol' indices of every state at each of `times` (points of the span).
pub fn sobol_report(
    solution: &ExpandedSolution,
    basis: &OrthoBasis,
    table: &MomentTable,
    times: &[f64],
) -> Result<SobolReport> {
    check_basis(solution, basis)?;
    let plan = SobolPlan::new(basis, table)?;
    let mut points = Vec::with_capacity(times.len() * solution.n_states());
    for &t in times {
        let all = solution.coefficients_at(t)?;
        for s in 0..solution.n_states() {
            let coeffs = &all[s * basis.len()..][..basis.len()];
            points.push(plan.point(coeffs, t, s));
        }
    }
    Ok(SobolReport {
        dimension: basis.dimension(),
        state_names: solution.state_names().to_vec(),
        points,
    })
}

/// Independent-input shortcut: `S_l` is the share of `u_j^2 |Phi_j|^2` over
/// the members whose index uses exactly the variables in `l`.
pub fn independent_sobol(coeffs: &[f64], basis: &OrthoBasis) -> Vec<(u32, f64)> {
    let var = variance_of(coeffs, basis);
    subsets(basis.dimension())
        .into_iter()
        .map(|mask| {
            let part: f64 = basis
                .indices()
                .iter()
                .zip(coeffs)
                .zip(basis.sq_norms())
                .filter(|((idx, _), _)| idx.support() == mask)
                .map(|((_, u), n)| u * u * n)
                .sum();
            (mask, part / var)
        })
        .collect()
}
