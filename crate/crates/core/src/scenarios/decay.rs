use std::path::Path;

use serde::Serialize;

use crate::basis::hermite_tensor_basis;
use crate::error::{PceError, Result};
use crate::galerkin::{uniform_grid, DopriOptions, GalerkinModel, Term};
use crate::moments::{gaussian_moment_table, reduce_singular_gaussian};
use crate::stats::std_series;

use super::config::ScenarioConfig;
use super::setup::{
    final_stats, table_order, write_json, write_standard_outputs, FinalStats, PceSetup, RunHeader,
};

pub const DECAY_MEAN: [f64; 2] = [1.0, 1.0];
pub const DECAY_STD: f64 = 0.25;

/// `y' = -alpha (y - beta)`, `y(0) = 0`, with parameters `(alpha, beta)`.
pub fn decay_model() -> GalerkinModel {
    GalerkinModel::new(
        vec!["y".into()],
        2,
        vec![
            Term::new(0, -1.0, vec![1, 0], vec![0]),
            Term::new(0, 1.0, vec![1, 1], vec![]),
        ],
        vec![0.0],
    )
    .expect("valid decay model")
}

pub fn decay_covariance(rho: f64) -> [[f64; 2]; 2] {
    let v = DECAY_STD * DECAY_STD;
    [[v, rho * v], [rho * v, v]]
}

/// Moments, basis and tensors for correlation `rho`; `|rho| = 1` goes
/// through the rank reduction.
pub fn decay_setup(rho: f64, p: u32) -> Result<PceSetup> {
    if !(rho.abs() <= 1.0) {
        return Err(PceError::Config(format!(
            "correlation {rho} outside [-1, 1]"
        )));
    }
    let model = decay_model();
    let cov = decay_covariance(rho);
    if rho.abs() == 1.0 {
        let reparam = reduce_singular_gaussian(&DECAY_MEAN, &cov)?;
        let reduced = crate::galerkin::substitute_affine_parameters(&model, &reparam)?;
        let table = reparam.reduced_moment_table(table_order(&reduced, p))?;
        PceSetup::new(model, Some(reparam), table, p)
    } else {
        let table = gaussian_moment_table(&DECAY_MEAN, &cov, table_order(&model, p))?;
        PceSetup::new(model, None, table, p)
    }
}

/// Independent case with the closed-form tensor Hermite basis.
pub fn decay_setup_hermite(p: u32) -> Result<PceSetup> {
    let model = decay_model();
    let table = gaussian_moment_table(&DECAY_MEAN, &decay_covariance(0.0), table_order(&model, p))?;
    let basis = hermite_tensor_basis(&DECAY_MEAN, &[DECAY_STD; 2], p)?.bound_to(&table)?;
    PceSetup::with_basis(model, None, table, basis)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCaseSummary {
    pub rho: f64,
    pub basis_size: usize,
    pub reduced_dim: usize,
    pub table_hash: String,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub final_stats: Vec<FinalStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecaySummary {
    pub config_hash: String,
    pub order: u32,
    pub cases: Vec<DecayCaseSummary>,
}

pub fn rho_dir(rho: f64) -> String {
    format!("rho_{rho}")
}

/// Solves the decay problem for every configured correlation and writes
/// one directory of CSVs per correlation plus `summary.json`.
pub fn run_decay(config: &ScenarioConfig, out_dir: &Path) -> Result<DecaySummary> {
    config.validate()?;
    let p = config.order();
    let span = (0.0, config.t_end());
    let times = uniform_grid(span.0, span.1, config.grid_points);
    let opts = DopriOptions {
        abs_tol: config.abs_tol,
        rel_tol: config.rel_tol,
        ..Default::default()
    };
    let mut cases = Vec::new();
    for &rho in &config.rho {
        let setup = decay_setup(rho, p)?;
        let solution = setup.solve(span, &times, &opts)?;
        let header = RunHeader {
            config_hash: config.hash(),
            seeds: vec![config.seed],
            order: p,
            moments: setup.table.provenance().clone(),
            label: format!("decay rho={rho}"),
        };
        let report =
            write_standard_outputs(&out_dir.join(rho_dir(rho)), &header, &setup, &solution)?;
        let stats = solution.stats();
        cases.push(DecayCaseSummary {
            rho,
            basis_size: setup.basis.len(),
            reduced_dim: setup.basis.dimension(),
            table_hash: setup.table.content_hash(),
            accepted_steps: stats.accepted,
            rejected_steps: stats.rejected,
            final_stats: final_stats(&setup, &solution, &report)?,
        });
    }
    let summary = DecaySummary {
        config_hash: config.hash(),
        order: p,
        cases,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Tolerance of the reference solve whose steps every order reuses.
pub const CONVERGENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub rho: f64,
    pub p: u32,
    pub eps_mu: f64,
    pub eps_sigma: f64,
}

/// Errors of mean and standard deviation at `t_f` for orders `1..p_ref`
/// against order `p_ref`. All orders are integrated on the accepted step
/// sequence of the reference solve so that step-size control does not
/// contaminate the differences.
pub fn convergence_study(
    rho: f64,
    p_ref: u32,
    t_f: f64,
    hermite: bool,
) -> Result<Vec<ConvergenceRow>> {
    let setup_for = |p: u32| {
        if hermite {
            if rho != 0.0 {
                return Err(PceError::Config(
                    "the Hermite basis needs independent inputs".into(),
                ));
            }
            decay_setup_hermite(p)
        } else {
            decay_setup(rho, p)
        }
    };
    let opts = DopriOptions {
        abs_tol: CONVERGENCE_TOL,
        rel_tol: CONVERGENCE_TOL,
        ..Default::default()
    };
    let reference = setup_for(p_ref)?;
    let ref_sol = reference.solve((0.0, t_f), &[t_f], &opts)?;
    let mu_ref = ref_sol.coefficient(0, 0, 0);
    let sigma_ref = std_series(&ref_sol, &reference.basis)?[0][0];
    let steps = ref_sol.steps().to_vec();
    (1..p_ref)
        .map(|p| {
            let setup = setup_for(p)?;
            let sol = setup.solve_on_steps(&steps, t_f, &[t_f])?;
            let mu = sol.coefficient(0, 0, 0);
            let sigma = std_series(&sol, &setup.basis)?[0][0];
            Ok(ConvergenceRow {
                rho,
                p,
                eps_mu: (mu - mu_ref).abs(),
                eps_sigma: (sigma - sigma_ref).abs(),
            })
        })
        .collect()
}

/// `convergence.csv` over every configured correlation.
pub fn run_convergence(config: &ScenarioConfig, out_dir: &Path) -> Result<Vec<ConvergenceRow>> {
    config.validate()?;
    let p_ref = config.order();
    let t_f = config.t_end();
    let mut rows = Vec::new();
    for &rho in &config.rho {
        rows.extend(convergence_study(rho, p_ref, t_f, config.hermite)?);
    }
    std::fs::create_dir_all(out_dir)?;
    let header = RunHeader {
        config_hash: config.hash(),
        seeds: vec![config.seed],
        order: p_ref,
        moments: crate::moments::Provenance::Analytic {
            family: "gaussian".into(),
        },
        label: "convergence".into(),
    };
    let mut w = super::setup::create_with_header(&out_dir.join("convergence.csv"), &header)?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(["rho", "p", "eps_mu", "eps_sigma"])?;
        for r in &rows {
            csv.write_record([
                r.rho.to_string(),
                r.p.to_string(),
                r.eps_mu.to_string(),
                r.eps_sigma.to_string(),
            ])?;
        }
        csv.flush()?;
    }
    std::io::Write::flush(&mut w)?;
    write_json(&out_dir.join("summary.json"), &rows)?;
    Ok(rows)
}
