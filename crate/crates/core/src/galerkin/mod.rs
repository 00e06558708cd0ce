//! Galerkin projection of polynomial ODE systems with random parameters.
//!
//! A model is a sum of terms `c * xi^r * y_a * y_b` (zero to two state
//! factors). Projecting onto `Phi_k` turns each term into one of
//!
//! * `T0_k = E[xi^r Phi_k] / |Phi_k|^2`
//! * `T1_{i,k} = E[xi^r Phi_i Phi_k] / |Phi_k|^2`
//! * `T2_{i,j,k} = E[xi^r Phi_i Phi_j Phi_k] / |Phi_k|^2`
//!
//! and the coefficient system is integrated with Dormand-Prince 5(4).

mod dopri;
mod solution;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::OrthoBasis;
use crate::compensated::Accumulator;
use crate::error::{PceError, Result};
use crate::moments::{AffineReparam, MomentTable};
use crate::polyalg::{poly_product, IndexSpace, MultiIndex, Polynomial};

pub use dopri::{solve, solve_on_steps, DenseSegment, DopriOptions, DopriOutput, StepStats};
pub use solution::{uniform_grid, ExpandedSolution};

/// Tensor entries below this fraction of their `k`-slice maximum are dropped.
pub const TENSOR_PRUNE_REL: f64 = 1e-13;

/// One monomial term `coefficient * xi^param_exponents * prod(state_factors)`
/// contributing to `d target / dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub target: usize,
    pub coefficient: f64,
    pub param_exponents: MultiIndex,
    pub state_factors: Vec<usize>,
}

impl Term {
    pub fn new(
        target: usize,
        coefficient: f64,
        param_exponents: Vec<u32>,
        state_factors: Vec<usize>,
    ) -> Self {
        Term {
            target,
            coefficient,
            param_exponents: MultiIndex::new(param_exponents),
            state_factors,
        }
    }
}

/// Polynomial right-hand side with deterministic initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinModel {
    state_names: Vec<String>,
    param_dim: usize,
    terms: Vec<Term>,
    initial_conditions: Vec<f64>,
}

impl GalerkinModel {
    pub fn new(
        state_names: Vec<String>,
        param_dim: usize,
        terms: Vec<Term>,
        initial_conditions: Vec<f64>,
    ) -> Result<Self> {
        let n = state_names.len();
        if initial_conditions.len() != n {
            return Err(PceError::DimensionMismatch {
                expected: n,
                found: initial_conditions.len(),
            });
        }
        for t in &terms {
            if t.target >= n || t.state_factors.iter().any(|&s| s >= n) {
                return Err(PceError::InvalidModel(format!(
                    "term refers to a state outside 0..{n}"
                )));
            }
            if t.state_factors.len() > 2 {
                return Err(PceError::InvalidModel(
                    "at most two state factors per term".into(),
                ));
            }
            if t.param_exponents.dim() != param_dim {
                return Err(PceError::DimensionMismatch {
                    expected: param_dim,
                    found: t.param_exponents.dim(),
                });
            }
            if !t.coefficient.is_finite() {
                return Err(PceError::InvalidModel("non-finite term coefficient".into()));
            }
        }
        Ok(GalerkinModel {
            state_names,
            param_dim,
            terms,
            initial_conditions,
        })
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn initial_conditions(&self) -> &[f64] {
        &self.initial_conditions
    }

    /// Largest total degree of any parameter monomial.
    pub fn r_max(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.param_exponents.degree())
            .max()
            .unwrap_or(0)
    }

    /// `xi^r` of every term at a fixed parameter point.
    pub fn term_rates(&self, xi: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| {
                t.coefficient
                    * t.param_exponents
                        .exponents()
                        .iter()
                        .zip(xi)
                        .map(|(&e, x)| x.powi(e as i32))
                        .product::<f64>()
            })
            .collect()
    }

    /// Right-hand side for fixed parameters, with rates from [`Self::term_rates`].
    pub fn deterministic_rhs(&self, rates: &[f64], y: &[f64], dy: &mut [f64]) {
        dy.fill(0.0);
        for (t, r) in self.terms.iter().zip(rates) {
            let v = t.state_factors.iter().fold(*r, |acc, &s| acc * y[s]);
            dy[t.target] += v;
        }
    }
}

/// Rewrites every `xi^r` through `xi = offset + A eta`, merging like terms.
pub fn substitute_affine_parameters(
    model: &GalerkinModel,
    reparam: &AffineReparam,
) -> Result<GalerkinModel> {
    if reparam.original_dim() != model.param_dim {
        return Err(PceError::DimensionMismatch {
            expected: model.param_dim,
            found: reparam.original_dim(),
        });
    }
    let mut order: Vec<(usize, MultiIndex, Vec<usize>)> = Vec::new();
    let mut merged: HashMap<(usize, MultiIndex, Vec<usize>), f64> = HashMap::new();
    let mut cache: HashMap<MultiIndex, Polynomial> = HashMap::new();
    for t in &model.terms {
        if !cache.contains_key(&t.param_exponents) {
            let poly = reparam.monomial_in_reduced(&t.param_exponents)?;
            cache.insert(t.param_exponents.clone(), poly);
        }
        let mut factors = t.state_factors.clone();
        factors.sort_unstable();
        for (idx, c) in cache[&t.param_exponents].terms() {
            let key = (t.target, idx.clone(), factors.clone());
            match merged.get_mut(&key) {
                Some(v) => *v += t.coefficient * c,
                None => {
                    merged.insert(key.clone(), t.coefficient * c);
                    order.push(key);
                }
            }
        }
    }
    let terms = order
        .into_iter()
        .filter_map(|key| {
            let c = merged[&key];
            (c != 0.0).then_some(Term {
                target: key.0,
                coefficient: c,
                param_exponents: key.1,
                state_factors: key.2,
            })
        })
        .collect();
    GalerkinModel::new(
        model.state_names.clone(),
        reparam.reduced_dim(),
        terms,
        model.initial_conditions.clone(),
    )
}

/// Projected tensor for one `(r, arity)` pair, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBlock {
    pub param_exponents: MultiIndex,
    pub arity: usize,
    k: usize,
    dense: Vec<f64>,
    // Per output index k: nonzero (i, j, value); j unused for arity 1.
    sparse: Vec<Vec<(u32, u32, f64)>>,
}

impl TensorBlock {
    pub fn t0(&self, k: usize) -> f64 {
        assert_eq!(self.arity, 0);
        self.dense[k]
    }

    pub fn t1(&self, i: usize, k: usize) -> f64 {
        assert_eq!(self.arity, 1);
        self.dense[i * self.k + k]
    }

    pub fn t2(&self, i: usize, j: usize, k: usize) -> f64 {
        assert_eq!(self.arity, 2);
        self.dense[(i * self.k + j) * self.k + k]
    }

    pub fn nonzeros(&self) -> usize {
        self.sparse.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Contraction {
    block: usize,
    factors: Vec<usize>,
    targets: Vec<(usize, f64)>,
}

/// Coefficient-space system `du_{s,k}/dt = ...` for one model and basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinTensors {
    basis_len: usize,
    n_states: usize,
    table_hash: String,
    blocks: Vec<TensorBlock>,
    contractions: Vec<Contraction>,
}

impl GalerkinTensors {
    pub fn basis_len(&self) -> usize {
        self.basis_len
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn table_hash(&self) -> &str {
        &self.table_hash
    }

    pub fn blocks(&self) -> &[TensorBlock] {
        &self.blocks
    }

    pub fn block(&self, r: &MultiIndex, arity: usize) -> Option<&TensorBlock> {
        self.blocks
            .iter()
            .find(|b| &b.param_exponents == r && b.arity == arity)
    }

    /// Evaluates the coefficient right-hand side; `u` and `du` hold
    /// `n_states` consecutive blocks of `basis_len` coefficients.
    pub fn rhs(&self, u: &[f64], du: &mut [f64]) {
        let kk = self.basis_len;
        du.fill(0.0);
        let mut acc = vec![0.0; kk];
        for c in &self.contractions {
            let b = &self.blocks[c.block];
            match b.arity {
                0 => acc.copy_from_slice(&b.dense),
                1 => {
                    let x = &u[c.factors[0] * kk..][..kk];
                    for (k, row) in b.sparse.iter().enumerate() {
                        acc[k] = row.iter().map(|&(i, _, v)| v * x[i as usize]).sum();
                    }
                }
                _ => {
                    let x = &u[c.factors[0] * kk..][..kk];
                    let y = &u[c.factors[1] * kk..][..kk];
                    for (k, row) in b.sparse.iter().enumerate() {
                        acc[k] = row
                            .iter()
                            .map(|&(i, j, v)| v * x[i as usize] * y[j as usize])
                            .sum();
                    }
                }
            }
            for &(s, coef) in &c.targets {
                for (d, a) in du[s * kk..][..kk].iter_mut().zip(&acc) {
                    *d += coef * a;
                }
            }
        }
    }
}

/// Moment order needed for a term with parameter degree `r_deg` and `arity`
/// state factors under an order-`p` basis.
pub fn required_order(r_deg: u32, arity: usize, p: u32) -> u32 {
    r_deg + (arity as u32 + 1) * p
}

/// Projects `model` onto `basis`; all expectations are sums over `table`.
pub fn compile_model(
    model: &GalerkinModel,
    basis: &OrthoBasis,
    table: &MomentTable,
) -> Result<GalerkinTensors> {
    if model.param_dim != basis.dimension() {
        return Err(PceError::DimensionMismatch {
            expected: basis.dimension(),
            found: model.param_dim,
        });
    }
    if !basis.matches(table) {
        return Err(PceError::TableMismatch);
    }
    let p = basis.order();
    let mut blocks: Vec<TensorBlock> = Vec::new();
    let mut contractions: Vec<Contraction> = Vec::new();
    for t in &model.terms {
        let arity = t.state_factors.len();
        let need = required_order(t.param_exponents.degree(), arity, p);
        if need > table.max_order() {
            return Err(PceError::TableTooSmall {
                required: need,
                available: table.max_order(),
            });
        }
        let block = match blocks
            .iter()
            .position(|b| b.param_exponents == t.param_exponents && b.arity == arity)
        {
            Some(b) => b,
            None => {
                blocks.push(project(&t.param_exponents, arity, basis, table)?);
                blocks.len() - 1
            }
        };
        let mut factors = t.state_factors.clone();
        factors.sort_unstable();
        match contractions
            .iter_mut()
            .find(|c| c.block == block && c.factors == factors)
        {
            Some(c) => match c.targets.iter_mut().find(|(s, _)| *s == t.target) {
                Some((_, v)) => *v += t.coefficient,
                None => c.targets.push((t.target, t.coefficient)),
            },
            None => contractions.push(Contraction {
                block,
                factors,
                targets: vec![(t.target, t.coefficient)],
            }),
        }
    }
    Ok(GalerkinTensors {
        basis_len: basis.len(),
        n_states: model.n_states(),
        table_hash: basis.table_hash().to_string(),
        blocks,
        contractions,
    })
}

fn project(
    r: &MultiIndex,
    arity: usize,
    basis: &OrthoBasis,
    table: &MomentTable,
) -> Result<TensorBlock> {
    let kk = basis.len();
    let n = basis.dimension();
    let p = basis.order();
    let moments = table.space();
    let q = Polynomial::monomial(r.clone(), 1.0).recentered(table.center());
    let probes = IndexSpace::new(n, arity as u32 * p);
    let probe_indices = probes.indices();

    // w[k][a] = E[z^a q Phi_k] for every probe monomial a.
    let w: Vec<Vec<f64>> = basis
        .polys()
        .par_iter()
        .map(|phi| {
            let qk = poly_product(&q, phi)?;
            Ok(probe_indices
                .iter()
                .map(|a| {
                    let mut acc = Accumulator::new();
                    for (b, c) in qk.terms() {
                        acc.add_prod(c, table.value_at(moments.rank_of_sum(a, b)));
                    }
                    acc.value()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let norms = basis.sq_norms();
    let contract = |poly: &Polynomial, k: usize| -> f64 {
        let mut acc = Accumulator::new();
        for (a, c) in poly.terms() {
            acc.add_prod(c, w[k][probes.rank(a)]);
        }
        acc.value() / norms[k]
    };

    let mut dense = match arity {
        0 => (0..kk).map(|k| w[k][0] / norms[k]).collect(),
        1 => {
            let rows: Vec<Vec<f64>> = basis
                .polys()
                .par_iter()
                .map(|phi| (0..kk).map(|k| contract(phi, k)).collect())
                .collect();
            rows.concat()
        }
        2 => {
            let pairs: Vec<(usize, usize)> =
                (0..kk).flat_map(|i| (i..kk).map(move |j| (i, j))).collect();
            let vals: Vec<Vec<f64>> = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let prod = poly_product(&basis.polys()[i], &basis.polys()[j])?;
                    Ok((0..kk).map(|k| contract(&prod, k)).collect())
                })
                .collect::<Result<_>>()?;
            let mut dense = vec![0.0; kk * kk * kk];
            for (&(i, j), v) in pairs.iter().zip(&vals) {
                dense[(i * kk + j) * kk..][..kk].copy_from_slice(v);
                dense[(j * kk + i) * kk..][..kk].copy_from_slice(v);
            }
            dense
        }
        _ => {
            return Err(PceError::InvalidModel(
                "at most two state factors per term".into(),
            ))
        }
    };

    let lead = if arity == 0 { 1 } else { kk.pow(arity as u32) };
    let mut sparse = vec![Vec::new(); kk];
    for (k, row) in sparse.iter_mut().enumerate() {
        let max = (0..lead)
            .map(|m| dense[m * kk + k].abs())
            .fold(0.0, f64::max);
        for m in 0..lead {
            let v = &mut dense[m * kk + k];
            if v.abs() < TENSOR_PRUNE_REL * max {
                *v = 0.0;
            } else if *v != 0.0 && arity > 0 {
                let (i, j) = if arity == 2 { (m / kk, m % kk) } else { (m, 0) };
                row.push((i as u32, j as u32, *v));
            }
        }
    }
    Ok(TensorBlock {
        param_exponents: r.clone(),
        arity,
        k: kk,
        dense,
        sparse,
    })
}

fn initial_coefficients(model: &GalerkinModel, kk: usize) -> Vec<f64> {
    let mut u0 = vec![0.0; model.n_states() * kk];
    for (s, ic) in model.initial_conditions.iter().enumerate() {
        u0[s * kk] = *ic;
    }
    u0
}

fn check_pair(tensors: &GalerkinTensors, model: &GalerkinModel) -> Result<()> {
    if tensors.n_states != model.n_states() {
        return Err(PceError::DimensionMismatch {
            expected: model.n_states(),
            found: tensors.n_states,
        });
    }
    Ok(())
}

/// Adaptive solve of the coefficient system over `[t0, t1]`, reporting the
/// coefficients at `times`.
pub fn integrate(
    tensors: &GalerkinTensors,
    model: &GalerkinModel,
    span: (f64, f64),
    times: &[f64],
    opts: &DopriOptions,
) -> Result<ExpandedSolution> {
    check_pair(tensors, model)?;
    let u0 = initial_coefficients(model, tensors.basis_len);
    let opts = DopriOptions {
        keep_dense: true,
        ..*opts
    };
    let out = solve(
        |_, u, du| tensors.rhs(u, du),
        span.0,
        span.1,
        &u0,
        times,
        &opts,
    )?;
    Ok(ExpandedSolution::new(model, tensors, span, times, out))
}

/// Same as [`integrate`] on a prescribed step sequence.
pub fn integrate_on_steps(
    tensors: &GalerkinTensors,
    model: &GalerkinModel,
    steps: &[(f64, f64)],
    t1: f64,
    times: &[f64],
) -> Result<ExpandedSolution> {
    check_pair(tensors, model)?;
    let u0 = initial_coefficients(model, tensors.basis_len);
    let out = solve_on_steps(|_, u, du| tensors.rhs(u, du), steps, t1, &u0, times, true)?;
    let t0 = steps.first().map(|s| s.0).unwrap_or(t1);
    Ok(ExpandedSolution::new(model, tensors, (t0, t1), times, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::moments::{gaussian_moment_table, reduce_singular_gaussian};

    fn decay() -> GalerkinModel {
        GalerkinModel::new(
            vec!["y".into()],
            2,
            vec![
                Term::new(0, -1.0, vec![1, 0], vec![0]),
                Term::new(0, 1.0, vec![1, 1], vec![]),
            ],
            vec![0.0],
        )
        .unwrap()
    }

    fn decay_table(rho: f64, order: u32) -> MomentTable {
        let v = 0.0625;
        gaussian_moment_table(&[1.0, 1.0], &[[v, rho * v], [rho * v, v]], order).unwrap()
    }

    #[test]
    fn order_zero_tensors() {
        let t = decay_table(0.5, 4);
        let b = build_basis(&t, 0).unwrap();
        let g = compile_model(&decay(), &b, &t).unwrap();
        assert!((g.block(&MultiIndex::new(vec![1, 0]), 1).unwrap().t1(0, 0) - 1.0).abs() < 1e-15);
        assert!((g.block(&MultiIndex::new(vec![1, 1]), 0).unwrap().t0(0) - 1.03125).abs() < 1e-15);
    }

    #[test]
    fn identity_and_symmetry() {
        let t = decay_table(-0.5, 12);
        let b = build_basis(&t, 3).unwrap();
        let m = GalerkinModel::new(
            vec!["a".into(), "b".into()],
            2,
            vec![
                Term::new(0, 1.0, vec![0, 0], vec![1]),
                Term::new(1, 1.0, vec![1, 0], vec![0, 1]),
            ],
            vec![1.0, 1.0],
        )
        .unwrap();
        let g = compile_model(&m, &b, &t).unwrap();
        let id = g.block(&MultiIndex::zeros(2), 1).unwrap();
        let t2 = g.block(&MultiIndex::new(vec![1, 0]), 2).unwrap();
        for i in 0..b.len() {
            for k in 0..b.len() {
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((id.t1(i, k) - want).abs() < 1e-9);
                for j in 0..b.len() {
                    assert_eq!(t2.t2(i, j, k), t2.t2(j, i, k));
                }
            }
        }
    }

    #[test]
    fn insufficient_table_names_order() {
        let t = decay_table(0.0, 8);
        let b = build_basis(&t, 4).unwrap();
        let err = compile_model(&decay(), &b, &t).unwrap_err();
        assert!(matches!(
            err,
            PceError::TableTooSmall {
                required: 9,
                available: 8
            }
        ));
    }

    #[test]
    fn foreign_table_rejected() {
        let t = decay_table(0.0, 8);
        let b = build_basis(&t, 2).unwrap();
        let other = decay_table(0.5, 8);
        assert!(matches!(
            compile_model(&decay(), &b, &other),
            Err(PceError::TableMismatch)
        ));
    }

    #[test]
    fn degenerate_substitution() {
        let v = 0.0625;
        let plus = reduce_singular_gaussian(&[1.0, 1.0], &[[v, v], [v, v]]).unwrap();
        let m = substitute_affine_parameters(&decay(), &plus).unwrap();
        assert_eq!(
            m.terms(),
            &[
                Term::new(0, -1.0, vec![1], vec![0]),
                Term::new(0, 1.0, vec![2], vec![])
            ]
        );
        let minus = reduce_singular_gaussian(&[1.0, 1.0], &[[v, -v], [-v, v]]).unwrap();
        let m = substitute_affine_parameters(&decay(), &minus).unwrap();
        let mut got: Vec<(u32, usize, f64)> = m
            .terms()
            .iter()
            .map(|t| {
                (
                    t.param_exponents.get(0),
                    t.state_factors.len(),
                    t.coefficient,
                )
            })
            .collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [(1, 0, 2.0), (1, 1, -1.0), (2, 0, -1.0)];
        assert_eq!(got.len(), 3);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((g.0, g.1), (w.0, w.1));
            assert!((g.2 - w.2).abs() < 1e-14);
        }
    }

    #[test]
    fn order_zero_decay_closed_form() {
        let e1 = 1.0 - (-1.0f64).exp();
        for (rho, scale) in [(0.0, 1.0), (0.5, 1.03125)] {
            let t = decay_table(rho, 4);
            let b = build_basis(&t, 0).unwrap();
            let g = compile_model(&decay(), &b, &t).unwrap();
            let opts = DopriOptions {
                abs_tol: 1e-10,
                rel_tol: 1e-10,
                ..Default::default()
            };
            let sol = integrate(&g, &decay(), (0.0, 1.0), &[0.0, 1.0], &opts).unwrap();
            assert_eq!(sol.coefficient(0, 0, 0), 0.0);
            assert!((sol.coefficient(1, 0, 0) - scale * e1).abs() < 1e-8);
        }
    }

    #[test]
    fn rhs_matches_deterministic_model_for_order_zero_point_mass() {
        let m = decay();
        let rates = m.term_rates(&[2.0, 3.0]);
        let mut dy = [0.0];
        m.deterministic_rhs(&rates, &[0.5], &mut dy);
        assert_eq!(dy[0], -2.0 * 0.5 + 6.0);
    }
}
