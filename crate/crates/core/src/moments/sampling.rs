//! Monte Carlo and sample-based moment tables, and the samplers behind them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{check_symmetric, psd_factor, PsdFactor};
use super::{check_order, MomentTable, Provenance};
use crate::compensated::Accumulator;
use crate::error::{PceError, Result};
use crate::polyalg::IndexSpace;

/// Default sample count for Monte Carlo moment tables.
pub const DEFAULT_MC_MOMENT_SAMPLES: usize = 1_000_000;

const CHUNK: usize = 8192;

/// A matrix of `m` draws of an `n`-dimensional vector, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(PceError::InvalidDistribution(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(SampleSet { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(PceError::EmptySamples)?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PceError::InvalidDistribution("ragged sample rows".into()));
        }
        SampleSet::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![Accumulator::new(); self.dim];
        for row in self.rows() {
            for (a, x) in acc.iter_mut().zip(row) {
                a.add(*x);
            }
        }
        let m = self.len().max(1) as f64;
        acc.iter().map(|a| a.value() / m).collect()
    }

    /// Sample Pearson correlation between columns `i` and `j`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let mean = self.mean();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for row in self.rows() {
            let (dx, dy) = (row[i] - mean[i], row[j] - mean[j]);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        sxy / (sxx * syy).sqrt()
    }
}

/// Source of independent draws of the random input vector.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;

    /// Nominal center used as the expansion point of moment tables.
    fn center(&self) -> Vec<f64>;

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);

    /// `n` draws, deterministic in `seed` and independent of thread count.
    fn sample_n(&self, n: usize, seed: u64) -> SampleSet
    where
        Self: Sized,
    {
        let dim = self.dim();
        let chunks: Vec<Vec<f64>> = chunk_ranges(n)
            .into_par_iter()
            .map(|(c, len)| {
                let mut rng = chunk_rng(seed, c);
                let mut buf = vec![0.0; len * dim];
                for row in buf.chunks_exact_mut(dim) {
                    self.draw(&mut rng, row);
                }
                buf
            })
            .collect();
        SampleSet {
            dim,
            data: chunks.concat(),
        }
    }
}

pub(crate) fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(n - c * CHUNK)))
        .collect()
}

pub(crate) fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Draws from `N(mean, covariance)`; singular covariances are allowed.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    factor: PsdFactor,
}

impl GaussianSampler {
    pub fn new<R: AsRef<[f64]>>(mean: &[f64], covariance: &[R]) -> Result<Self> {
        check_symmetric(covariance, mean.len(), "covariance")?;
        let factor = psd_factor(covariance).map_err(|(i, j)| {
            PceError::InvalidDistribution(format!(
                "covariance is not positive semi-definite at pair ({i}, {j})"
            ))
        })?;
        Ok(GaussianSampler {
            mean: mean.to_vec(),
            factor,
        })
    }
}

impl Sampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn center(&self) -> Vec<f64> {
        self.mean.clone()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let g: Vec<f64> = (0..self.mean.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.factor.apply(&g, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }
}

/// Uniform marginals coupled through a Gaussian copula.
#[derive(Debug, Clone)]
pub struct CopulaUniformSampler {
    mean: Vec<f64>,
    lower: Vec<f64>,
    width: Vec<f64>,
    latent: Vec<Vec<f64>>,
    factor: PsdFactor,
}

impl CopulaUniformSampler {
    /// Correlation of the latent Gaussian vector.
    pub fn latent_correlation(&self) -> &[Vec<f64>] {
        &self.latent
    }

    pub fn bounds(&self, l: usize) -> (f64, f64) {
        (self.lower[l], self.lower[l] + self.width[l])
    }
}

/// Latent Gaussian correlation giving uniform marginals linear correlation `c`.
pub(crate) fn latent_for_uniform(c: f64) -> f64 {
    if c == 0.0 || c.abs() == 1.0 {
        c
    } else {
        2.0 * (std::f64::consts::PI * c / 6.0).sin()
    }
}

pub(crate) fn validate_uniform<R: AsRef<[f64]>>(
    mean: &[f64],
    std: &[f64],
    correlation: &[R],
) -> Result<()> {
    let n = mean.len();
    if n == 0 || std.len() != n {
        return Err(PceError::DimensionMismatch {
            expected: n,
            found: std.len(),
        });
    }
    if let Some(l) = std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(PceError::InvalidDistribution(format!(
            "standard deviation of variable {l} must be positive"
        )));
    }
    check_symmetric(correlation, n, "correlation")?;
    for (i, row) in correlation.iter().enumerate() {
        let row = row.as_ref();
        if row[i] != 1.0 {
            return Err(PceError::InvalidDistribution(format!(
                "correlation diagonal entry {i} is not 1"
            )));
        }
        if row.iter().any(|c| c.abs() > 1.0) {
            return Err(PceError::InvalidDistribution(format!(
                "correlation row {i} leaves [-1, 1]"
            )));
        }
    }
    Ok(())
}

/// Sampler for uniforms with the given means, standard deviations and
/// linear correlation matrix. Each marginal is uniform on
/// `[mean - sqrt(3) std, mean + sqrt(3) std]`; the latent Gaussian correlation
/// is `2 sin(pi c / 6)`.
pub fn copula_uniform_sampler<R: AsRef<[f64]>>(
    mean: &[f64],
    std: &[f64],
    correlation: &[R],
) -> Result<CopulaUniformSampler> {
    validate_uniform(mean, std, correlation)?;
    let latent: Vec<Vec<f64>> = correlation
        .iter()
        .map(|row| {
            row.as_ref()
                .iter()
                .map(|&c| latent_for_uniform(c))
                .collect()
        })
        .collect();
    let factor = psd_factor(&latent).map_err(|(i, j)| PceError::CopulaNotPsd(i, j))?;
    let half: Vec<f64> = std.iter().map(|s| 3f64.sqrt() * s).collect();
    Ok(CopulaUniformSampler {
        mean: mean.to_vec(),
        lower: mean.iter().zip(&half).map(|(m, h)| m - h).collect(),
        width: half.iter().map(|h| 2.0 * h).collect(),
        latent,
        factor,
    })
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

impl Sampler for CopulaUniformSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn center(&self) -> Vec<f64> {
        self.mean.clone()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let g: Vec<f64> = (0..self.mean.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.factor.apply(&g, out);
        for (l, o) in out.iter_mut().enumerate() {
            *o = self.lower[l] + self.width[l] * normal_cdf(*o);
        }
    }
}

// Each monomial is its parent times one coordinate.
struct MonomialPlan {
    parent: Vec<(usize, usize)>,
    len: usize,
}

impl MonomialPlan {
    fn new(space: &IndexSpace) -> Self {
        let indices = space.indices();
        let parent = indices
            .iter()
            .map(|idx| {
                let e = idx.exponents();
                match e.iter().position(|&x| x > 0) {
                    None => (0, 0),
                    Some(i) => (space.rank_with(|l| if l == i { e[l] - 1 } else { e[l] }), i),
                }
            })
            .collect();
        MonomialPlan {
            parent,
            len: indices.len(),
        }
    }

    fn accumulate(&self, rows: &[f64], center: &[f64], sums: &mut [f64]) {
        let dim = center.len();
        let mut vals = vec![0.0; self.len];
        let mut z = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for l in 0..dim {
                z[l] = row[l] - center[l];
            }
            vals[0] = 1.0;
            sums[0] += 1.0;
            for r in 1..self.len {
                let (p, i) = self.parent[r];
                let v = vals[p] * z[i];
                vals[r] = v;
                sums[r] += v;
            }
        }
    }
}

fn merge_chunks(partials: Vec<Vec<f64>>, len: usize, count: usize) -> Vec<f64> {
    let mut acc = vec![Accumulator::new(); len];
    for part in &partials {
        for (a, v) in acc.iter_mut().zip(part) {
            a.add(*v);
        }
    }
    acc.iter().map(|a| a.value() / count as f64).collect()
}

/// Moments estimated as sample means of `prod (xi_l - c_l)^{r_l}` over
/// `n_samples` draws, expanded about the sampler's center.
pub fn monte_carlo_moment_table<S: Sampler>(
    sampler: &S,
    n_samples: usize,
    max_order: u32,
    seed: u64,
) -> Result<MomentTable> {
    if n_samples < 1000 {
        return Err(PceError::Config(format!(
            "Monte Carlo moment tables need at least 1000 samples, got {n_samples}"
        )));
    }
    check_order(max_order)?;
    let dim = sampler.dim();
    let center = sampler.center();
    let space = IndexSpace::new(dim, max_order);
    let plan = MonomialPlan::new(&space);
    let partials: Vec<Vec<f64>> = chunk_ranges(n_samples)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut rows = vec![0.0; len * dim];
            for row in rows.chunks_exact_mut(dim) {
                sampler.draw(&mut rng, row);
            }
            let mut sums = vec![0.0; plan.len];
            plan.accumulate(&rows, &center, &mut sums);
            sums
        })
        .collect();
    let values = merge_chunks(partials, plan.len, n_samples);
    MomentTable::from_values(
        center,
        max_order,
        values,
        Provenance::MonteCarlo {
            samples: n_samples,
            seed,
        },
    )
}

/// Moments of the empirical measure of `samples`, about the sample mean.
pub fn empirical_moments(samples: &SampleSet, max_order: u32) -> Result<MomentTable> {
    if samples.is_empty() {
        return Err(PceError::EmptySamples);
    }
    check_order(max_order)?;
    let center = samples.mean();
    let space = IndexSpace::new(samples.dim(), max_order);
    let plan = MonomialPlan::new(&space);
    let partials: Vec<Vec<f64>> = samples
        .data
        .par_chunks(CHUNK * samples.dim())
        .map(|rows| {
            let mut sums = vec![0.0; plan.len];
            plan.accumulate(rows, &center, &mut sums);
            sums
        })
        .collect();
    let values = merge_chunks(partials, plan.len, samples.len());
    MomentTable::from_values(
        center,
        max_order,
        values,
        Provenance::Empirical {
            samples: samples.len(),
        },
    )
}

/// Exact moments of independent uniforms on `[lower_l, upper_l]`, about the midpoint.
pub fn uniform_moment_table(lower: &[f64], upper: &[f64], max_order: u32) -> Result<MomentTable> {
    if lower.len() != upper.len() {
        return Err(PceError::DimensionMismatch {
            expected: lower.len(),
            found: upper.len(),
        });
    }
    if lower.iter().zip(upper).any(|(a, b)| !(b > a)) {
        return Err(PceError::InvalidDistribution(
            "empty uniform interval".into(),
        ));
    }
    check_order(max_order)?;
    let center: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let half: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(a, b)| 0.5 * (b - a))
        .collect();
    let space = IndexSpace::new(lower.len(), max_order);
    let values = space
        .indices()
        .iter()
        .map(|idx| {
            idx.exponents()
                .iter()
                .zip(&half)
                .map(|(&k, h)| {
                    if k % 2 == 1 {
                        0.0
                    } else {
                        h.powi(k as i32) / (k + 1) as f64
                    }
                })
                .product()
        })
        .collect();
    MomentTable::from_values(
        center,
        max_order,
        values,
        Provenance::Analytic {
            family: "independent uniform".into(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::MultiIndex;

    struct Ones(usize);

    impl Sampler for Ones {
        fn dim(&self) -> usize {
            self.0
        }
        fn center(&self) -> Vec<f64> {
            vec![0.0; self.0]
        }
        fn draw(&self, _: &mut ChaCha8Rng, out: &mut [f64]) {
            out.fill(1.0);
        }
    }

    #[test]
    fn point_mass_moments_are_one() {
        let t = monte_carlo_moment_table(&Ones(3), 5000, 6, 1).unwrap();
        assert!(t.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(monte_carlo_moment_table(&Ones(1), 999, 2, 1).is_err());
    }

    #[test]
    fn empirical_examples() {
        let one = SampleSet::from_rows(&[vec![2.0, 3.0]]).unwrap();
        let t = empirical_moments(&one, 2).unwrap();
        assert!((t.raw_moment(&MultiIndex::new(vec![1, 1])).unwrap() - 6.0).abs() < 1e-14);

        let two = SampleSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let t = empirical_moments(&two, 2).unwrap();
        assert!(t.raw_moment(&MultiIndex::new(vec![1, 1])).unwrap().abs() < 1e-15);
    }

    #[test]
    fn empty_sample_set_rejected() {
        let empty = SampleSet::new(2, vec![]).unwrap();
        assert!(matches!(
            empirical_moments(&empty, 2),
            Err(PceError::EmptySamples)
        ));
    }

    #[test]
    fn same_seed_same_table() {
        let s =
            copula_uniform_sampler(&[0.5, 0.5], &[0.2, 0.1], &[[1.0, 0.3], [0.3, 1.0]]).unwrap();
        let a = monte_carlo_moment_table(&s, 20_000, 6, 9).unwrap();
        let b = monte_carlo_moment_table(&s, 20_000, 6, 9).unwrap();
        let c = monte_carlo_moment_table(&s, 20_000, 6, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn uniform_bounds_from_std() {
        let s = copula_uniform_sampler(&[0.212], &[0.031], &[[1.0]]).unwrap();
        let (lo, hi) = s.bounds(0);
        assert!((lo - (0.212 - 3f64.sqrt() * 0.031)).abs() < 1e-15);
        assert!((hi - (0.212 + 3f64.sqrt() * 0.031)).abs() < 1e-15);
    }

    #[test]
    fn latent_adjustment_fixed_points() {
        assert_eq!(latent_for_uniform(1.0), 1.0);
        assert_eq!(latent_for_uniform(-1.0), -1.0);
        assert_eq!(latent_for_uniform(0.0), 0.0);
        assert!(
            (latent_for_uniform(0.5) - 2.0 * (std::f64::consts::PI / 12.0).sin()).abs() < 1e-15
        );
    }

    #[test]
    fn non_psd_copula_names_pair() {
        let c = [[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]];
        let err = copula_uniform_sampler(&[1.0; 3], &[0.1; 3], &c).unwrap_err();
        assert!(matches!(err, PceError::CopulaNotPsd(_, 2)));
    }

    #[test]
    fn invalid_uniform_specs() {
        assert!(copula_uniform_sampler(&[1.0], &[0.0], &[[1.0]]).is_err());
        assert!(
            copula_uniform_sampler(&[1.0, 1.0], &[0.1, 0.1], &[[1.0, 1.2], [1.2, 1.0]]).is_err()
        );
        assert!(
            copula_uniform_sampler(&[1.0, 1.0], &[0.1, 0.1], &[[0.9, 0.0], [0.0, 1.0]]).is_err()
        );
    }

    #[test]
    fn analytic_uniform_table() {
        let t = uniform_moment_table(&[0.0], &[1.0], 4).unwrap();
        for k in 0..=4u32 {
            let raw = t.raw_moment(&MultiIndex::new(vec![k])).unwrap();
            assert!((raw - 1.0 / (k + 1) as f64).abs() < 1e-15);
        }
    }
}
