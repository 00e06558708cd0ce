//! Moment tables for the random inputs.
//!
//! A [`MomentTable`] stores `E[prod_l (xi_l - c_l)^{r_l}]` for every index of
//! total degree `<= max_order`, where `c` is the table's `center`. A zero
//! center gives raw moments; analytic tables are expanded about the mean,
//! which keeps high-order Gram matrices far better conditioned.

mod gaussian;
mod linalg;
mod reduce;
mod sampling;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PceError, Result};
use crate::polyalg::{expectation, IndexSpace, MultiIndex, Polynomial};

pub use gaussian::{gaussian_moment_table, gaussian_moments_about};
pub use reduce::{reduce_singular_gaussian, AffineReparam};
pub use sampling::{
    copula_uniform_sampler, empirical_moments, monte_carlo_moment_table, uniform_moment_table,
    CopulaUniformSampler, GaussianSampler, SampleSet, Sampler, DEFAULT_MC_MOMENT_SAMPLES,
};

/// Hard cap on the moment order held in double precision.
pub const MAX_MOMENT_ORDER: u32 = 40;

/// Largest moment magnitude before a conditioning warning is logged.
pub const MAGNITUDE_WARNING: f64 = 1e12;

/// Where a table's values came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Analytic { family: String },
    MonteCarlo { samples: usize, seed: u64 },
    Empirical { samples: usize },
}

/// Input distribution descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// Uniform marginals on `[mean - sqrt(3) std, mean + sqrt(3) std]`
    /// coupled through a Gaussian copula.
    CorrelatedUniform {
        mean: Vec<f64>,
        std: Vec<f64>,
        correlation: Vec<Vec<f64>>,
    },
    SampleSet(SampleSet),
}

impl DistributionSpec {
    pub fn dimension(&self) -> usize {
        match self {
            DistributionSpec::Gaussian { mean, .. } => mean.len(),
            DistributionSpec::CorrelatedUniform { mean, .. } => mean.len(),
            DistributionSpec::SampleSet(s) => s.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Gaussian { mean, covariance } => {
                linalg::check_symmetric(covariance, mean.len(), "covariance")?;
                linalg::psd_factor(covariance).map_err(|(i, j)| {
                    PceError::InvalidDistribution(format!(
                        "covariance is not positive semi-definite at pair ({i}, {j})"
                    ))
                })?;
                Ok(())
            }
            DistributionSpec::CorrelatedUniform {
                mean,
                std,
                correlation,
            } => sampling::validate_uniform(mean, std, correlation),
            DistributionSpec::SampleSet(s) => {
                if s.is_empty() {
                    return Err(PceError::EmptySamples);
                }
                Ok(())
            }
        }
    }

    /// Exact mean vector of the distribution (sample mean for sample sets).
    pub fn mean(&self) -> Vec<f64> {
        match self {
            DistributionSpec::Gaussian { mean, .. } => mean.clone(),
            DistributionSpec::CorrelatedUniform { mean, .. } => mean.clone(),
            DistributionSpec::SampleSet(s) => s.mean(),
        }
    }
}

/// Moments `E[(xi - center)^r]` for all `|r| <= max_order`.
#[derive(Debug, Clone)]
pub struct MomentTable {
    center: Vec<f64>,
    values: Vec<f64>,
    provenance: Provenance,
    space: IndexSpace,
}

impl PartialEq for MomentTable {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center
            && self.values == other.values
            && self.provenance == other.provenance
            && self.max_order() == other.max_order()
    }
}

impl MomentTable {
    /// Wraps values given in rank order of the graded index space.
    pub fn from_values(
        center: Vec<f64>,
        max_order: u32,
        mut values: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if center.is_empty() {
            return Err(PceError::InvalidDistribution(
                "zero-dimensional table".into(),
            ));
        }
        check_order(max_order)?;
        let space = IndexSpace::new(center.len(), max_order);
        if values.len() != space.len() {
            return Err(PceError::InvalidDistribution(format!(
                "expected {} moments, got {}",
                space.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PceError::InvalidDistribution("non-finite moment".into()));
        }
        values[0] = 1.0;
        let table = MomentTable {
            center,
            values,
            provenance,
            space,
        };
        if table.poorly_scaled() {
            log::warn!(
                "moment magnitudes reach {:.3e}; orthogonalization may lose accuracy",
                table.max_abs_moment()
            );
        }
        Ok(table)
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn max_order(&self) -> u32 {
        self.space.max_order()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn space(&self) -> &IndexSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub(crate) fn value_at(&self, rank: usize) -> f64 {
        self.values[rank]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored moment about the center, if the index is covered.
    pub fn get(&self, idx: &MultiIndex) -> Option<f64> {
        if idx.dim() != self.dimension() || idx.degree() > self.max_order() {
            return None;
        }
        Some(self.values[self.space.rank(idx)])
    }

    /// Raw moment `E[xi^r]`, re-expanded from the stored central frame.
    pub fn raw_moment(&self, idx: &MultiIndex) -> Result<f64> {
        expectation(&Polynomial::monomial(idx.clone(), 1.0), self)
    }

    /// Indices and stored values in rank order.
    pub fn entries(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.space
            .indices()
            .into_iter()
            .zip(self.values.iter().copied())
    }

    pub fn max_abs_moment(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn poorly_scaled(&self) -> bool {
        self.max_abs_moment() > MAGNITUDE_WARNING
    }

    /// The same measure with moments taken about `new_center`.
    ///
    /// Binomial re-expansion loses accuracy when the shift is large relative
    /// to the spread; prefer generating tables in the frame they are used in.
    pub fn recentered(&self, new_center: &[f64]) -> Result<MomentTable> {
        if new_center.len() != self.dimension() {
            return Err(PceError::DimensionMismatch {
                expected: self.dimension(),
                found: new_center.len(),
            });
        }
        let values = self
            .space
            .indices()
            .iter()
            .map(|idx| {
                let p = Polynomial::monomial(idx.clone(), 1.0)
                    .with_origin_unchecked(new_center.to_vec());
                expectation(&p, self)
            })
            .collect::<Result<Vec<_>>>()?;
        MomentTable::from_values(
            new_center.to_vec(),
            self.max_order(),
            values,
            self.provenance.clone(),
        )
    }

    /// Content hash over dimension, order, center and values.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dimension() as u64).to_le_bytes());
        h.update(self.max_order().to_le_bytes());
        for c in &self.center {
            h.update(c.to_bits().to_le_bytes());
        }
        for v in &self.values {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &TableRepr::from(self))?;
        Ok(())
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let repr: TableRepr = serde_json::from_reader(r)?;
        repr.try_into()
    }
}

fn check_order(order: u32) -> Result<()> {
    if order > MAX_MOMENT_ORDER {
        return Err(PceError::OrderCap {
            requested: order,
            cap: MAX_MOMENT_ORDER,
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    index: MultiIndex,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    dimension: usize,
    max_order: u32,
    center: Vec<f64>,
    provenance: Provenance,
    entries: Vec<EntryRepr>,
}

impl From<&MomentTable> for TableRepr {
    fn from(t: &MomentTable) -> Self {
        TableRepr {
            dimension: t.dimension(),
            max_order: t.max_order(),
            center: t.center.clone(),
            provenance: t.provenance.clone(),
            entries: t
                .entries()
                .map(|(index, value)| EntryRepr { index, value })
                .collect(),
        }
    }
}

impl TryFrom<TableRepr> for MomentTable {
    type Error = PceError;

    fn try_from(repr: TableRepr) -> Result<Self> {
        if repr.center.len() != repr.dimension {
            return Err(PceError::DimensionMismatch {
                expected: repr.dimension,
                found: repr.center.len(),
            });
        }
        check_order(repr.max_order)?;
        let space = IndexSpace::new(repr.dimension, repr.max_order);
        let mut values = vec![f64::NAN; space.len()];
        for e in repr.entries {
            if e.index.dim() != repr.dimension || e.index.degree() > repr.max_order {
                return Err(PceError::InvalidDistribution(format!(
                    "entry {} does not fit the table",
                    e.index
                )));
            }
            values[space.rank(&e.index)] = e.value;
        }
        if let Some(pos) = values.iter().position(|v| v.is_nan()) {
            return Err(PceError::InvalidDistribution(format!(
                "missing moment {}",
                space.indices()[pos]
            )));
        }
        MomentTable::from_values(repr.center, repr.max_order, values, repr.provenance)
    }
}
