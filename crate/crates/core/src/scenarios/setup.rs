use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::basis::{build_basis, OrthoBasis};
use crate::error::Result;
use crate::galerkin::{
    compile_model, integrate, integrate_on_steps, required_order, substitute_affine_parameters,
    DopriOptions, ExpandedSolution, GalerkinModel, GalerkinTensors,
};
use crate::moments::{AffineReparam, MomentTable, Provenance};
use crate::stats::{mean_series, sobol_report, std_series, subset_label, SobolReport};

/// Moment order that covers the basis construction and every projected term.
pub fn table_order(model: &GalerkinModel, p: u32) -> u32 {
    model
        .terms()
        .iter()
        .map(|t| required_order(t.param_exponents.degree(), t.state_factors.len(), p))
        .fold(2 * p, u32::max)
}

/// A model projected onto a basis, ready to integrate.
#[derive(Debug, Clone)]
pub struct PceSetup {
    /// The model as stated, in the original parameters.
    pub original: GalerkinModel,
    /// The model actually projected (after any reduction).
    pub model: GalerkinModel,
    pub reparam: Option<AffineReparam>,
    pub table: MomentTable,
    pub basis: OrthoBasis,
    pub tensors: GalerkinTensors,
}

impl PceSetup {
    /// Gram-Schmidt basis of order `p` on `table`, which must be in the
    /// reduced parameters when `reparam` is given.
    pub fn new(
        original: GalerkinModel,
        reparam: Option<AffineReparam>,
        table: MomentTable,
        p: u32,
    ) -> Result<Self> {
        let basis = build_basis(&table, p)?;
        Self::with_basis(original, reparam, table, basis)
    }

    pub fn with_basis(
        original: GalerkinModel,
        reparam: Option<AffineReparam>,
        table: MomentTable,
        basis: OrthoBasis,
    ) -> Result<Self> {
        let model = match &reparam {
            Some(r) => substitute_affine_parameters(&original, r)?,
            None => original.clone(),
        };
        let tensors = compile_model(&model, &basis, &table)?;
        Ok(PceSetup {
            original,
            model,
            reparam,
            table,
            basis,
            tensors,
        })
    }

    pub fn solve(
        &self,
        span: (f64, f64),
        times: &[f64],
        opts: &DopriOptions,
    ) -> Result<ExpandedSolution> {
        integrate(&self.tensors, &self.model, span, times, opts)
    }

    pub fn solve_on_steps(
        &self,
        steps: &[(f64, f64)],
        t1: f64,
        times: &[f64],
    ) -> Result<ExpandedSolution> {
        integrate_on_steps(&self.tensors, &self.model, steps, t1, times)
    }

    /// Surrogate in the original parameters.
    pub fn surrogate(&self, solution: &ExpandedSolution, xi: &[f64], t: f64) -> Result<Vec<f64>> {
        match &self.reparam {
            None => solution.evaluate_surrogate(&self.basis, xi, t),
            Some(r) => {
                let eta: Vec<f64> = r.pivots().iter().map(|&p| xi[p]).collect();
                if eta.len() == r.reduced_dim() {
                    solution.evaluate_surrogate(&self.basis, &eta, t)
                } else {
                    Err(crate::error::PceError::InvalidModel(
                        "reduction has no pivot coordinates; evaluate in reduced variables".into(),
                    ))
                }
            }
        }
    }
}

/// Header lines written at the top of every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunHeader {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub order: u32,
    pub moments: Provenance,
    pub label: String,
}

impl RunHeader {
    fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# run: {}", self.label)?;
        writeln!(w, "# config_hash: {}", self.config_hash)?;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(w, "# seeds: {}", seeds.join(" "))?;
        writeln!(w, "# order: {}", self.order)?;
        writeln!(w, "# moments: {}", serde_json::to_string(&self.moments)?)?;
        Ok(())
    }
}

pub(crate) fn create_with_header(path: &Path, header: &RunHeader) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    header.write(&mut w)?;
    Ok(w)
}

/// `mean_std.csv`, `sobol.csv` and `sobol_total.csv` for one solved setup.
pub fn write_standard_outputs(
    dir: &Path,
    header: &RunHeader,
    setup: &PceSetup,
    solution: &ExpandedSolution,
) -> Result<SobolReport> {
    std::fs::create_dir_all(dir)?;
    let means = mean_series(solution);
    let stds = std_series(solution, &setup.basis)?;
    let mut w = create_with_header(&dir.join("mean_std.csv"), header)?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(["t", "state", "mean", "std"])?;
        for (ti, t) in solution.times().iter().enumerate() {
            for (s, name) in solution.state_names().iter().enumerate() {
                csv.write_record([
                    t.to_string(),
                    name.clone(),
                    means[s][ti].to_string(),
                    stds[s][ti].to_string(),
                ])?;
            }
        }
        csv.flush()?;
    }
    w.flush()?;

    let report = sobol_report(solution, &setup.basis, &setup.table, solution.times())?;
    let mut w = create_with_header(&dir.join("sobol.csv"), header)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create_with_header(&dir.join("sobol_total.csv"), header)?;
    report.write_totals_csv(&mut w)?;
    w.flush()?;
    Ok(report)
}

/// Final-time statistics of one state, as stored in `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct FinalStats {
    pub state: String,
    pub t: f64,
    pub mean: f64,
    pub std: f64,
    pub sobol: Vec<(String, f64, f64, f64)>,
    pub sobol_total: Vec<(String, f64, f64, f64)>,
}

pub(crate) fn final_stats(
    setup: &PceSetup,
    solution: &ExpandedSolution,
    report: &SobolReport,
) -> Result<Vec<FinalStats>> {
    let last = solution.times().len() - 1;
    let t = solution.times()[last];
    let stds = std_series(solution, &setup.basis)?;
    Ok((0..solution.n_states())
        .map(|s| {
            let point = report.point(s, t);
            let rows = |total: bool| {
                point
                    .filter(|p| p.defined)
                    .map(|p| {
                        let entries = if total { &p.totals } else { &p.subsets };
                        entries
                            .iter()
                            .map(|e| (subset_label(e.subset), e.s, e.s_u, e.s_c))
                            .collect()
                    })
                    .unwrap_or_default()
            };
            FinalStats {
                state: solution.state_names()[s].clone(),
                t,
                mean: solution.coefficient(last, s, 0),
                std: stds[s][last],
                sobol: rows(false),
                sobol_total: rows(true),
            }
        })
        .collect())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
