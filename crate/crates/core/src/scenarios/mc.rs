use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{PceError, Result};
use crate::galerkin::{solve, uniform_grid, DopriOptions, GalerkinModel};
use crate::moments::{copula_uniform_sampler, GaussianSampler, Sampler};

use super::config::{ModelKind, ScenarioConfig};
use super::decay::{decay_covariance, decay_model, rho_dir, DECAY_MEAN};
use super::enzyme::{correlation_matrix, enzyme_model, ENZYME_MEAN, ENZYME_STD};
use super::setup::{create_with_header, write_json, RunHeader};

/// Largest skipped fraction before a reference run is rejected.
pub const MAX_SKIPPED_FRACTION: f64 = 1e-3;

const CHUNK: usize = 1024;

/// Sample statistics of the deterministic model, indexed `[state][time]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReference {
    pub times: Vec<f64>,
    pub state_names: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub se_mean: Vec<Vec<f64>>,
    pub se_std: Vec<Vec<f64>>,
    pub samples: usize,
    pub skipped: usize,
    pub seed: u64,
}

// Power sums of deviations from a fixed shift, per (time, state).
#[derive(Clone)]
struct Sums {
    n: usize,
    s: [Vec<f64>; 4],
}

impl Sums {
    fn new(len: usize) -> Self {
        Sums {
            n: 0,
            s: std::array::from_fn(|_| vec![0.0; len]),
        }
    }

    fn push(&mut self, d: &[f64]) {
        self.n += 1;
        for (i, &x) in d.iter().enumerate() {
            let x2 = x * x;
            self.s[0][i] += x;
            self.s[1][i] += x2;
            self.s[2][i] += x2 * x;
            self.s[3][i] += x2 * x2;
        }
    }

    fn merge(&mut self, o: &Sums) {
        self.n += o.n;
        for k in 0..4 {
            for (a, b) in self.s[k].iter_mut().zip(&o.s[k]) {
                *a += b;
            }
        }
    }
}

/// Solves `model` for `n` parameter draws and reports mean and standard
/// deviation with their standard errors at `times`. Samples whose solve
/// fails are skipped; more than 0.1% failures is an error.
pub fn mc_reference<S: Sampler>(
    model: &GalerkinModel,
    sampler: &S,
    n: usize,
    seed: u64,
    span: (f64, f64),
    times: &[f64],
    opts: &DopriOptions,
) -> Result<McReference> {
    if n < 1000 {
        return Err(PceError::Config(format!(
            "Monte Carlo reference needs at least 1000 samples, got {n}"
        )));
    }
    if sampler.dim() != model.param_dim() {
        return Err(PceError::DimensionMismatch {
            expected: model.param_dim(),
            found: sampler.dim(),
        });
    }
    let samples = sampler.sample_n(n, seed);
    let ns = model.n_states();
    let width = times.len() * ns;
    let trajectory = |xi: &[f64]| -> Result<Vec<f64>> {
        let rates = model.term_rates(xi);
        let out = solve(
            |_, y, dy| model.deterministic_rhs(&rates, y, dy),
            span.0,
            span.1,
            model.initial_conditions(),
            times,
            opts,
        )?;
        Ok(out.values.concat())
    };
    let shift = trajectory(&sampler.center())?;
    let chunks: Vec<(Sums, usize)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = Sums::new(width);
            let mut skipped = 0;
            let mut d = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                match trajectory(samples.row(i)) {
                    Ok(y) => {
                        for (k, v) in d.iter_mut().enumerate() {
                            *v = y[k] - shift[k];
                        }
                        sums.push(&d);
                    }
                    Err(_) => skipped += 1,
                }
            }
            (sums, skipped)
        })
        .collect();
    let mut total = Sums::new(width);
    let mut skipped = 0;
    for (s, k) in &chunks {
        total.merge(s);
        skipped += k;
    }
    if skipped as f64 > MAX_SKIPPED_FRACTION * n as f64 {
        return Err(PceError::TooManyFailures { skipped, total: n });
    }
    Ok(summarize(total, &shift, times, model, n, skipped, seed))
}

fn summarize(
    sums: Sums,
    shift: &[f64],
    times: &[f64],
    model: &GalerkinModel,
    n: usize,
    skipped: usize,
    seed: u64,
) -> McReference {
    let ns = model.n_states();
    let m = sums.n as f64;
    let grid = |f: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        (0..ns)
            .map(|s| (0..times.len()).map(|ti| f(ti * ns + s)).collect())
            .collect()
    };
    let central = |i: usize| {
        let d1 = sums.s[0][i] / m;
        let m2 = (sums.s[1][i] / m - d1 * d1).max(0.0);
        let m4 = sums.s[3][i] / m - 4.0 * d1 * sums.s[2][i] / m + 6.0 * d1 * d1 * sums.s[1][i] / m
            - 3.0 * d1.powi(4);
        (d1, m2, m4.max(0.0))
    };
    let std_of = |i: usize| (central(i).1 * m / (m - 1.0)).sqrt();
    McReference {
        times: times.to_vec(),
        state_names: model.state_names().to_vec(),
        mean: grid(&|i| shift[i] + central(i).0),
        std: grid(&std_of),
        se_mean: grid(&|i| std_of(i) / m.sqrt()),
        se_std: grid(&|i| {
            let (_, m2, m4) = central(i);
            let sd = std_of(i);
            if sd == 0.0 {
                0.0
            } else {
                ((m4 - m2 * m2).max(0.0) / m).sqrt() / (2.0 * sd)
            }
        }),
        samples: n,
        skipped,
        seed,
    }
}

/// Ten equally spaced checkpoints after the initial time.
pub fn checkpoints(t0: f64, t1: f64) -> Vec<f64> {
    uniform_grid(t0, t1, 11)[1..].to_vec()
}

fn write_reference(path: &Path, header: &RunHeader, r: &McReference) -> Result<()> {
    let mut w = create_with_header(path, header)?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(["t", "state", "mean", "std", "se_mean", "se_std"])?;
        for (ti, t) in r.times.iter().enumerate() {
            for (s, name) in r.state_names.iter().enumerate() {
                csv.write_record([
                    t.to_string(),
                    name.clone(),
                    r.mean[s][ti].to_string(),
                    r.std[s][ti].to_string(),
                    r.se_mean[s][ti].to_string(),
                    r.se_std[s][ti].to_string(),
                ])?;
            }
        }
        csv.flush()?;
    }
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Monte Carlo reference for the configured model: one run per decay
/// correlation, or one enzyme run.
pub fn run_mc_reference(config: &ScenarioConfig, out_dir: &Path) -> Result<Vec<McReference>> {
    config.validate()?;
    let span = (0.0, config.t_end());
    let times = uniform_grid(span.0, span.1, config.grid_points);
    let opts = DopriOptions {
        abs_tol: config.abs_tol,
        rel_tol: config.rel_tol,
        ..Default::default()
    };
    let header = |label: String| RunHeader {
        config_hash: config.hash(),
        seeds: vec![config.seed],
        order: 0,
        moments: crate::moments::Provenance::MonteCarlo {
            samples: config.mc_samples,
            seed: config.seed,
        },
        label,
    };
    let mut out = Vec::new();
    match config.mc_model {
        ModelKind::Decay => {
            for &rho in &config.rho {
                let sampler = GaussianSampler::new(&DECAY_MEAN, &decay_covariance(rho))?;
                let r = mc_reference(
                    &decay_model(),
                    &sampler,
                    config.mc_samples,
                    config.seed,
                    span,
                    &times,
                    &opts,
                )?;
                let dir = out_dir.join(rho_dir(rho));
                std::fs::create_dir_all(&dir)?;
                write_reference(
                    &dir.join("mc_mean_std.csv"),
                    &header(format!("mc decay rho={rho}")),
                    &r,
                )?;
                out.push(r);
            }
        }
        ModelKind::Enzyme => {
            let corr = correlation_matrix(&config.correlation);
            let sampler = copula_uniform_sampler(&ENZYME_MEAN, &ENZYME_STD, &corr)?;
            let r = mc_reference(
                &enzyme_model(),
                &sampler,
                config.mc_samples,
                config.seed,
                span,
                &times,
                &opts,
            )?;
            std::fs::create_dir_all(out_dir)?;
            let label = format!("mc enzyme correlation={}", config.correlation.label());
            write_reference(&out_dir.join("mc_mean_std.csv"), &header(label), &r)?;
            out.push(r);
        }
    }
    write_json(&out_dir.join("summary.json"), &out)?;
    Ok(out)
}
