use std::io::Write;

use crate::basis::OrthoBasis;
use crate::error::{PceError, Result};

use super::dopri::{DenseSegment, DopriOutput, StepStats};
use super::{GalerkinModel, GalerkinTensors};

/// `n` equally spaced points from `t0` to `t1` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t1],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Expansion coefficients `u_{s,j}(t)` on an output grid, plus the
/// continuous extension of the solve.
#[derive(Debug, Clone)]
pub struct ExpandedSolution {
    state_names: Vec<String>,
    basis_len: usize,
    table_hash: String,
    span: (f64, f64),
    times: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    segments: Vec<DenseSegment>,
    steps: Vec<(f64, f64)>,
    stats: StepStats,
}

impl ExpandedSolution {
    pub(super) fn new(
        model: &GalerkinModel,
        tensors: &GalerkinTensors,
        span: (f64, f64),
        times: &[f64],
        out: DopriOutput,
    ) -> Self {
        ExpandedSolution {
            state_names: model.state_names().to_vec(),
            basis_len: tensors.basis_len(),
            table_hash: tensors.table_hash().to_string(),
            span,
            times: times.to_vec(),
            coefficients: out.values,
            segments: out.segments,
            steps: out.steps,
            stats: out.stats,
        }
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn basis_len(&self) -> usize {
        self.basis_len
    }

    pub fn table_hash(&self) -> &str {
        &self.table_hash
    }

    pub fn span(&self) -> (f64, f64) {
        self.span
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Accepted `(t, h)` steps, reusable with `integrate_on_steps`.
    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    /// `u_{s,j}` at output time index `ti`.
    pub fn coefficient(&self, ti: usize, s: usize, j: usize) -> f64 {
        self.coefficients[ti][s * self.basis_len + j]
    }

    /// All coefficients of state `s` at output time index `ti`.
    pub fn state_coefficients(&self, ti: usize, s: usize) -> &[f64] {
        &self.coefficients[ti][s * self.basis_len..][..self.basis_len]
    }

    /// Coefficients at an arbitrary `t` in the span, from the dense output.
    pub fn coefficients_at(&self, t: f64) -> Result<Vec<f64>> {
        let (t0, t1) = self.span;
        if !(t0..=t1).contains(&t) {
            return Err(PceError::OutsideSpan {
                t,
                start: t0,
                end: t1,
            });
        }
        let mut out = vec![0.0; self.n_states() * self.basis_len];
        if let Some(i) = self.times.iter().position(|&x| x == t) {
            out.copy_from_slice(&self.coefficients[i]);
            return Ok(out);
        }
        let seg = self
            .segments
            .iter()
            .find(|s| t <= s.end())
            .or(self.segments.last())
            .ok_or(PceError::OutsideSpan {
                t,
                start: t0,
                end: t1,
            })?;
        seg.eval(t, &mut out);
        Ok(out)
    }

    /// `sum_j u_{s,j}(t) Phi_j(xi)` for every state.
    pub fn evaluate_surrogate(&self, basis: &OrthoBasis, xi: &[f64], t: f64) -> Result<Vec<f64>> {
        if basis.len() != self.basis_len || basis.table_hash() != self.table_hash {
            return Err(PceError::TableMismatch);
        }
        let u = self.coefficients_at(t)?;
        let phi = basis.evaluate_all(xi)?;
        Ok((0..self.n_states())
            .map(|s| {
                u[s * self.basis_len..][..self.basis_len]
                    .iter()
                    .zip(&phi)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// Long-format CSV: `t,state,basis_index,coefficient`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["t", "state", "basis_index", "coefficient"])?;
        for (ti, t) in self.times.iter().enumerate() {
            for (s, name) in self.state_names.iter().enumerate() {
                for j in 0..self.basis_len {
                    csv.write_record([
                        t.to_string(),
                        name.clone(),
                        j.to_string(),
                        self.coefficient(ti, s, j).to_string(),
                    ])?;
                }
            }
        }
        csv.flush()?;
        Ok(())
    }
}
