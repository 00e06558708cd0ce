//! Small dense helpers for covariance and correlation matrices.

use crate::error::{PceError, Result};

pub(crate) fn check_symmetric<R: AsRef<[f64]>>(m: &[R], n: usize, what: &str) -> Result<()> {
    if m.len() != n {
        return Err(PceError::DimensionMismatch {
            expected: n,
            found: m.len(),
        });
    }
    for (i, row) in m.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != n {
            return Err(PceError::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(PceError::InvalidDistribution(format!(
                    "{what} has non-finite entry"
                )));
            }
            let w = m[j].as_ref()[i];
            if (v - w).abs() > 1e-12 * (1.0 + v.abs().max(w.abs())) {
                return Err(PceError::InvalidDistribution(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Lower-triangular `L` with `L L^T = A` for a positive semi-definite `A`.
/// Columns belonging to zero pivots are left empty.
#[derive(Debug, Clone)]
pub(crate) struct PsdFactor {
    pub l: Vec<Vec<f64>>,
    pub rank: usize,
}

impl PsdFactor {
    pub fn apply(&self, g: &[f64], out: &mut [f64]) {
        for (i, row) in self.l.iter().enumerate() {
            out[i] = row[..=i].iter().zip(g).map(|(a, b)| a * b).sum();
        }
    }
}

/// Semi-definite Cholesky. On failure returns the pair `(i, j)` whose
/// entry could not be matched: `j` is the failing column and `i` the row
/// (for a negative pivot, the earlier variable most strongly coupled to it).
pub(crate) fn psd_factor<R: AsRef<[f64]>>(
    a: &[R],
) -> std::result::Result<PsdFactor, (usize, usize)> {
    let n = a.len();
    let at = |i: usize, j: usize| a[i].as_ref()[j];
    let scale = (0..n)
        .fold(0.0f64, |m, i| m.max(at(i, i).abs()))
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut l = vec![vec![0.0; n]; n];
    let mut rank = 0;
    for j in 0..n {
        let d = at(j, j) - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -tol {
            let partner = (0..j)
                .max_by(|&x, &y| at(j, x).abs().total_cmp(&at(j, y).abs()))
                .unwrap_or(j);
            return Err((partner, j));
        }
        if d <= tol {
            for i in j + 1..n {
                let r = at(i, j) - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if r.abs() > 1e-9 * scale {
                    return Err((j, i));
                }
            }
            continue;
        }
        let s = d.sqrt();
        l[j][j] = s;
        rank += 1;
        for i in j + 1..n {
            let r = at(i, j) - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = r / s;
        }
    }
    Ok(PsdFactor { l, rank })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reconstructs() {
        let a = [[4.0, 2.0, 0.4], [2.0, 3.0, -0.5], [0.4, -0.5, 1.0]];
        let f = psd_factor(&a).unwrap();
        assert_eq!(f.rank, 3);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| f.l[i][k] * f.l[j][k]).sum();
                assert!((v - a[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_factor_is_exact_for_perfect_correlation() {
        let a = [[1.0, 1.0, -1.0], [1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        let f = psd_factor(&a).unwrap();
        assert_eq!(f.rank, 1);
        assert_eq!(f.l[1][0], 1.0);
        assert_eq!(f.l[2][0], -1.0);
    }

    #[test]
    fn indefinite_matrix_names_pair() {
        let a = [[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]];
        let (i, j) = psd_factor(&a).unwrap_err();
        assert_eq!(j, 2);
        assert!(i < 2);
    }
}
