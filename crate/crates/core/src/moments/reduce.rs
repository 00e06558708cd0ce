//! Affine reduction of a singular Gaussian to a full-rank one.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::linalg::check_symmetric;
use super::{gaussian_moment_table, uniform_moment_table, DistributionSpec, MomentTable};
use crate::error::{PceError, Result};
use crate::polyalg::{poly_product, MultiIndex, Polynomial};

/// Eigenvalues below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// `xi = offset + matrix * eta` for a lower-dimensional random vector `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineReparam {
    offset: Vec<f64>,
    matrix: Vec<Vec<f64>>,
    pivots: Vec<usize>,
    reduced: DistributionSpec,
}

impl AffineReparam {
    pub fn new(offset: Vec<f64>, matrix: Vec<Vec<f64>>, reduced: DistributionSpec) -> Result<Self> {
        reduced.validate()?;
        let d = reduced.dimension();
        if matrix.len() != offset.len() {
            return Err(PceError::DimensionMismatch {
                expected: offset.len(),
                found: matrix.len(),
            });
        }
        if let Some(row) = matrix.iter().find(|r| r.len() != d) {
            return Err(PceError::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        Ok(AffineReparam {
            offset,
            matrix,
            pivots: Vec::new(),
            reduced,
        })
    }

    pub fn original_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced.dimension()
    }

    /// Original coordinates retained as the reduced variables, ascending;
    /// empty for maps built with [`AffineReparam::new`].
    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn reduced(&self) -> &DistributionSpec {
        &self.reduced
    }

    /// Exact moments of `eta` for Gaussian and independent-uniform reductions.
    pub fn reduced_moment_table(&self, max_order: u32) -> Result<MomentTable> {
        match &self.reduced {
            DistributionSpec::Gaussian { mean, covariance } => {
                gaussian_moment_table(mean, covariance, max_order)
            }
            DistributionSpec::CorrelatedUniform {
                mean,
                std,
                correlation,
            } if is_identity(correlation) => {
                let half: Vec<f64> = std.iter().map(|s| 3f64.sqrt() * s).collect();
                let lower: Vec<f64> = mean.iter().zip(&half).map(|(m, h)| m - h).collect();
                let upper: Vec<f64> = mean.iter().zip(&half).map(|(m, h)| m + h).collect();
                uniform_moment_table(&lower, &upper, max_order)
            }
            _ => Err(PceError::InvalidDistribution(
                "no exact moments for this reduced distribution".into(),
            )),
        }
    }

    pub fn map(&self, eta: &[f64]) -> Result<Vec<f64>> {
        if eta.len() != self.reduced_dim() {
            return Err(PceError::DimensionMismatch {
                expected: self.reduced_dim(),
                found: eta.len(),
            });
        }
        Ok(self
            .offset
            .iter()
            .zip(&self.matrix)
            .map(|(o, row)| o + row.iter().zip(eta).map(|(a, e)| a * e).sum::<f64>())
            .collect())
    }

    /// Original coordinate `l` as a polynomial in `eta`.
    pub fn coordinate(&self, l: usize) -> Polynomial {
        let d = self.reduced_dim();
        let mut p = Polynomial::constant(d, self.offset[l]);
        for (k, &a) in self.matrix[l].iter().enumerate() {
            if a != 0.0 {
                p = p
                    .add_scaled(&Polynomial::variable(d, k), a)
                    .expect("same dimension");
            }
        }
        p
    }

    /// `prod_l xi_l^{r_l}` rewritten as a polynomial in `eta`.
    pub fn monomial_in_reduced(&self, r: &MultiIndex) -> Result<Polynomial> {
        if r.dim() != self.original_dim() {
            return Err(PceError::DimensionMismatch {
                expected: self.original_dim(),
                found: r.dim(),
            });
        }
        let mut out = Polynomial::constant(self.reduced_dim(), 1.0);
        for (l, &k) in r.exponents().iter().enumerate() {
            if k == 0 {
                continue;
            }
            let c = self.coordinate(l);
            for _ in 0..k {
                out = poly_product(&out, &c)?;
            }
        }
        Ok(out)
    }

    /// `A Sigma_eta A^T`, which should reproduce the original covariance.
    pub fn reconstructed_covariance(&self) -> Vec<Vec<f64>> {
        let n = self.original_dim();
        let d = self.reduced_dim();
        let cov = reduced_covariance(&self.reduced);
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += self.matrix[i][a] * cov[a][b] * self.matrix[j][b];
                    }
                }
                out[i][j] = s;
            }
        }
        out
    }
}

fn is_identity(m: &[Vec<f64>]) -> bool {
    m.iter().enumerate().all(|(i, r)| {
        r.iter()
            .enumerate()
            .all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 })
    })
}

fn reduced_covariance(spec: &DistributionSpec) -> Vec<Vec<f64>> {
    match spec {
        DistributionSpec::Gaussian { covariance, .. } => covariance.clone(),
        DistributionSpec::CorrelatedUniform {
            std, correlation, ..
        } => correlation
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .map(|(j, c)| c * std[i] * std[j])
                    .collect()
            })
            .collect(),
        DistributionSpec::SampleSet(s) => {
            let m = s.mean();
            let d = s.dim();
            let mut c = vec![vec![0.0; d]; d];
            for row in s.rows() {
                for i in 0..d {
                    for j in 0..d {
                        c[i][j] += (row[i] - m[i]) * (row[j] - m[j]);
                    }
                }
            }
            let k = s.len() as f64;
            c.iter()
                .map(|r| r.iter().map(|v| v / k).collect())
                .collect()
        }
    }
}

/// Rewrites a rank-deficient Gaussian as an affine image of a full-rank one.
///
/// Pivots are chosen greedily by largest remaining conditional variance
/// (ties go to the lower index); the other coordinates are their conditional
/// means given the pivots, which is exact because their conditional
/// variance vanishes.
pub fn reduce_singular_gaussian<R: AsRef<[f64]>>(
    mean: &[f64],
    covariance: &[R],
) -> Result<AffineReparam> {
    let n = mean.len();
    check_symmetric(covariance, n, "covariance")?;
    let sigma = DMatrix::from_fn(n, n, |i, j| covariance[i].as_ref()[j]);
    let eig = SymmetricEigen::new(sigma.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    if let Some(neg) = eig
        .eigenvalues
        .iter()
        .find(|&&v| v < -RANK_TOL * lmax.max(1.0))
    {
        return Err(PceError::InvalidDistribution(format!(
            "covariance has negative eigenvalue {neg:e}"
        )));
    }
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&v| v > RANK_TOL * lmax)
        .count();
    if rank == n {
        return Err(PceError::NoReductionNeeded(n));
    }
    if rank == 0 {
        return Err(PceError::InvalidDistribution(
            "covariance is identically zero".into(),
        ));
    }

    // Pivoted Cholesky on the residual covariance.
    let mut resid = sigma.clone();
    let mut chosen = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut best = None;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|b: usize| resid[(i, i)] > resid[(b, b)]) {
                best = Some(i);
            }
        }
        let k = best.expect("rank <= n");
        let pivot = resid[(k, k)];
        let col = resid.column(k).clone_owned();
        for i in 0..n {
            for j in 0..n {
                resid[(i, j)] -= col[i] * col[j] / pivot;
            }
        }
        chosen.push(k);
    }
    chosen.sort_unstable();

    let spp = DMatrix::from_fn(rank, rank, |a, b| sigma[(chosen[a], chosen[b])]);
    let chol = spp
        .clone()
        .cholesky()
        .ok_or(PceError::SingularCovariance { rank, dim: n })?;
    let mut matrix = vec![vec![0.0; rank]; n];
    let mut offset = vec![0.0; n];
    for i in 0..n {
        if let Some(a) = chosen.iter().position(|&p| p == i) {
            matrix[i][a] = 1.0;
            continue;
        }
        let s_ip = DMatrix::from_fn(rank, 1, |a, _| sigma[(i, chosen[a])]);
        let b = chol.solve(&s_ip);
        matrix[i] = b.iter().copied().collect();
        offset[i] = mean[i] - (0..rank).map(|a| b[a] * mean[chosen[a]]).sum::<f64>();
    }
    Ok(AffineReparam {
        offset,
        matrix,
        reduced: DistributionSpec::Gaussian {
            mean: chosen.iter().map(|&p| mean[p]).collect(),
            covariance: (0..rank)
                .map(|a| (0..rank).map(|b| spp[(a, b)]).collect())
                .collect(),
        },
        pivots: chosen,
    })
}
