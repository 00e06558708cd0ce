use std::path::Path;

use serde::Serialize;

use crate::error::{PceError, Result};
use crate::galerkin::{
    substitute_affine_parameters, uniform_grid, DopriOptions, GalerkinModel, Term,
};
use crate::moments::{
    copula_uniform_sampler, monte_carlo_moment_table, AffineReparam, DistributionSpec,
};

use super::config::{CorrelationSetting, ScenarioConfig};
use super::setup::{
    final_stats, table_order, write_json, write_standard_outputs, FinalStats, PceSetup, RunHeader,
};

pub const ENZYME_MEAN: [f64; 3] = [0.683, 0.312, 0.212];
pub const ENZYME_STD: [f64; 3] = [0.206, 0.175, 0.031];
pub const ENZYME_STATES: [&str; 4] = ["S", "C", "E", "P"];
pub const ENZYME_IC: [f64; 4] = [1.0, 0.0, 1.0, 0.0];

const S: usize = 0;
const C: usize = 1;
const E: usize = 2;
const P: usize = 3;

/// `E + S <-> C -> E + P` with rate constants `(k1, k2, k3)`.
pub fn enzyme_model() -> GalerkinModel {
    let k1 = || vec![1, 0, 0];
    let k2 = || vec![0, 1, 0];
    let k3 = || vec![0, 0, 1];
    GalerkinModel::new(
        ENZYME_STATES.iter().map(|s| s.to_string()).collect(),
        3,
        vec![
            Term::new(S, -1.0, k1(), vec![E, S]),
            Term::new(S, 1.0, k2(), vec![C]),
            Term::new(C, 1.0, k1(), vec![E, S]),
            Term::new(C, -1.0, k2(), vec![C]),
            Term::new(C, -1.0, k3(), vec![C]),
            Term::new(E, -1.0, k1(), vec![E, S]),
            Term::new(E, 1.0, k2(), vec![C]),
            Term::new(E, 1.0, k3(), vec![C]),
            Term::new(P, 1.0, k3(), vec![C]),
        ],
        ENZYME_IC.to_vec(),
    )
    .expect("valid enzyme model")
}

pub fn correlation_matrix(setting: &CorrelationSetting) -> Vec<Vec<f64>> {
    match setting {
        CorrelationSetting::Paper => vec![
            vec![1.0, 0.9, -0.37],
            vec![0.9, 1.0, -0.45],
            vec![-0.37, -0.45, 1.0],
        ],
        CorrelationSetting::Full => vec![
            vec![1.0, 1.0, -1.0],
            vec![1.0, 1.0, -1.0],
            vec![-1.0, -1.0, 1.0],
        ],
        CorrelationSetting::None => (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
        CorrelationSetting::Matrix(m) => m.clone(),
    }
}

/// Signs `s` with `corr = s s^T`, when every entry is `+-1` consistently.
pub fn full_correlation_signs(corr: &[Vec<f64>]) -> Option<Vec<f64>> {
    let signs: Vec<f64> = corr.first()?.clone();
    let ok = corr.iter().enumerate().all(|(i, row)| {
        row.iter()
            .enumerate()
            .all(|(j, &c)| c == signs[i] * signs[j])
    });
    (ok && signs.iter().all(|s| s.abs() == 1.0)).then_some(signs)
}

/// Fully correlated uniforms as functions of one `u ~ U(0, 1)`:
/// `k_i = mu_i + s_i sqrt(3) sigma_i (2u - 1)`.
pub fn uniform_collapse(mean: &[f64], std: &[f64], signs: &[f64]) -> Result<AffineReparam> {
    let s3 = 3f64.sqrt();
    let offset = (0..mean.len())
        .map(|i| mean[i] - signs[i] * s3 * std[i])
        .collect();
    let matrix = (0..mean.len())
        .map(|i| vec![2.0 * signs[i] * s3 * std[i]])
        .collect();
    AffineReparam::new(
        offset,
        matrix,
        DistributionSpec::CorrelatedUniform {
            mean: vec![0.5],
            std: vec![1.0 / 12f64.sqrt()],
            correlation: vec![vec![1.0]],
        },
    )
}

/// Moment table, basis and tensors for the enzyme problem. Fully
/// correlated settings collapse to one uniform parameter with exact
/// moments; everything else uses Monte Carlo moments of the copula.
pub fn enzyme_setup(
    corr: &[Vec<f64>],
    p: u32,
    moment_samples: usize,
    seed: u64,
) -> Result<PceSetup> {
    if corr.len() != 3 {
        return Err(PceError::DimensionMismatch {
            expected: 3,
            found: corr.len(),
        });
    }
    let model = enzyme_model();
    if let Some(signs) = full_correlation_signs(corr) {
        let reparam = uniform_collapse(&ENZYME_MEAN, &ENZYME_STD, &signs)?;
        let reduced = substitute_affine_parameters(&model, &reparam)?;
        let table = reparam.reduced_moment_table(table_order(&reduced, p))?;
        return PceSetup::new(model, Some(reparam), table, p);
    }
    let sampler = copula_uniform_sampler(&ENZYME_MEAN, &ENZYME_STD, corr)?;
    let table = monte_carlo_moment_table(&sampler, moment_samples, table_order(&model, p), seed)?;
    PceSetup::new(model, None, table, p)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnzymeSummary {
    pub config_hash: String,
    pub correlation: String,
    pub order: u32,
    pub seed: u64,
    pub basis_size: usize,
    pub table_hash: String,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub final_stats: Vec<FinalStats>,
}

pub fn run_enzyme(config: &ScenarioConfig, out_dir: &Path) -> Result<EnzymeSummary> {
    config.validate()?;
    let p = config.order();
    let corr = correlation_matrix(&config.correlation);
    let setup = enzyme_setup(&corr, p, config.moment_samples, config.seed)?;
    let span = (0.0, config.t_end());
    let times = uniform_grid(span.0, span.1, config.grid_points);
    let opts = DopriOptions {
        abs_tol: config.abs_tol,
        rel_tol: config.rel_tol,
        ..Default::default()
    };
    let solution = setup.solve(span, &times, &opts)?;
    let header = RunHeader {
        config_hash: config.hash(),
        seeds: vec![config.seed],
        order: p,
        moments: setup.table.provenance().clone(),
        label: format!("enzyme correlation={}", config.correlation.label()),
    };
    let report = write_standard_outputs(out_dir, &header, &setup, &solution)?;
    let stats = solution.stats();
    let summary = EnzymeSummary {
        config_hash: config.hash(),
        correlation: config.correlation.label().into(),
        order: p,
        seed: config.seed,
        basis_size: setup.basis.len(),
        table_hash: setup.table.content_hash(),
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
        final_stats: final_stats(&setup, &solution, &report)?,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
