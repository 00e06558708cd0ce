//! Exact moments of multivariate Gaussians.

use super::linalg::{check_symmetric, psd_factor};
use super::{check_order, MomentTable, Provenance};
use crate::error::{PceError, Result};
use crate::polyalg::IndexSpace;

/// Exact moments of `N(mean, covariance)` about the mean.
///
/// Requires a strictly positive definite covariance; singular inputs must go
/// through [`super::reduce_singular_gaussian`] first.
pub fn gaussian_moment_table<R: AsRef<[f64]>>(
    mean: &[f64],
    covariance: &[R],
    max_order: u32,
) -> Result<MomentTable> {
    let n = mean.len();
    check_symmetric(covariance, n, "covariance")?;
    let factor = psd_factor(covariance).map_err(|(i, j)| {
        PceError::InvalidDistribution(format!(
            "covariance is not positive semi-definite at pair ({i}, {j})"
        ))
    })?;
    if factor.rank < n {
        return Err(PceError::SingularCovariance {
            rank: factor.rank,
            dim: n,
        });
    }
    gaussian_moments_about(mean, covariance, mean, max_order)
}

/// Moments `E[(xi - center)^r]` of `N(mean, covariance)` from the recurrence
///
/// `mu_{q+e_i} = m_i mu_q + sum_j C_ij q_j mu_{q-e_j}`,  `m = mean - center`,
///
/// seeded with `mu_0 = 1`. Valid for any positive semi-definite covariance.
pub fn gaussian_moments_about<R: AsRef<[f64]>>(
    mean: &[f64],
    covariance: &[R],
    center: &[f64],
    max_order: u32,
) -> Result<MomentTable> {
    let n = mean.len();
    check_symmetric(covariance, n, "covariance")?;
    if center.len() != n {
        return Err(PceError::DimensionMismatch {
            expected: n,
            found: center.len(),
        });
    }
    check_order(max_order)?;
    let shift: Vec<f64> = mean.iter().zip(center).map(|(m, c)| m - c).collect();
    let space = IndexSpace::new(n, max_order);
    let indices = space.indices();
    let mut values = vec![0.0; indices.len()];
    values[0] = 1.0;
    let mut q = vec![0u32; n];
    for (r, idx) in indices.iter().enumerate().skip(1) {
        let e = idx.exponents();
        let i = e.iter().position(|&x| x > 0).expect("non-zero index");
        q.copy_from_slice(e);
        q[i] -= 1;
        let mut v = shift[i] * values[space.rank_with(|l| q[l])];
        for j in 0..n {
            let c = covariance[i].as_ref()[j];
            if q[j] > 0 && c != 0.0 {
                let qj = q[j];
                let lower = space.rank_with(|l| if l == j { q[l] - 1 } else { q[l] });
                v += c * qj as f64 * values[lower];
            }
        }
        values[r] = v;
    }
    MomentTable::from_values(
        center.to_vec(),
        max_order,
        values,
        Provenance::Analytic {
            family: "gaussian".into(),
        },
    )
}
