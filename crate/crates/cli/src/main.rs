use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use corrpce::basis::orthogonality_residual;
use corrpce::scenarios::{
    correlation_matrix, decay_setup, enzyme_setup, run_convergence, run_decay, run_enzyme,
    run_mc_reference, CorrelationSetting, ModelKind, ScenarioConfig, ScenarioKind,
};

#[derive(Parser)]
#[command(
    name = "corrpce",
    version,
    about = "Polynomial chaos for correlated inputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decay equation over a sweep of input correlations.
    Decay(Common),
    /// Enzymatic reaction under a chosen parameter correlation.
    Enzyme(Common),
    /// Error of orders 1..p-1 against the order-p decay solution.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Use the closed-form Hermite basis (uncorrelated inputs only).
        #[arg(long)]
        hermite: bool,
    },
    /// Monte Carlo reference statistics.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Model::Decay)]
        model: Model,
    },
    /// Build a basis and write it, with its moment table, as JSON.
    Basis {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Model::Decay)]
        model: Model,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Decay,
    Enzyme,
}

#[derive(Args)]
struct Common {
    /// Decay-input correlations, comma separated.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_list)]
    rho: Option<Rhos>,
    #[arg(long)]
    order: Option<u32>,
    /// Monte Carlo draws: moment estimation for `enzyme`/`basis`, reference runs for `mc`.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// paper, full, none, or a file holding the matrix (rows of numbers).
    #[arg(long)]
    corr: Option<String>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// TOML file with ScenarioConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone)]
struct Rhos(Vec<f64>);

fn parse_list(s: &str) -> std::result::Result<Rhos, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()
        .map(Rhos)
}

fn parse_corr(s: &str) -> Result<CorrelationSetting> {
    Ok(match s {
        "paper" => CorrelationSetting::Paper,
        "full" => CorrelationSetting::Full,
        "none" => CorrelationSetting::None,
        path => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading correlation file {path}"))?;
            let rows = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| {
                    l.split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|t| !t.is_empty())
                        .map(|t| {
                            t.parse::<f64>()
                                .with_context(|| format!("bad number {t:?} in {path}"))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
                bail!("correlation file {path} is not a square matrix");
            }
            CorrelationSetting::Matrix(rows)
        }
    })
}

fn config_for(
    kind: ScenarioKind,
    mc_model: Option<ModelKind>,
    c: &Common,
) -> Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_toml(&text)?
        }
        None => ScenarioConfig::for_scenario(kind),
    };
    cfg.scenario = kind;
    if let Some(m) = mc_model {
        cfg.mc_model = m;
    }
    if let Some(Rhos(r)) = &c.rho {
        cfg.rho = r.clone();
    }
    if c.order.is_some() {
        cfg.order = c.order;
    }
    if let Some(n) = c.samples {
        if kind == ScenarioKind::Mc {
            cfg.mc_samples = n;
        } else {
            cfg.moment_samples = n;
        }
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(s) = &c.corr {
        cfg.correlation = parse_corr(s)?;
    }
    if let Some(t) = c.abs_tol {
        cfg.abs_tol = t;
    }
    if let Some(t) = c.rel_tol {
        cfg.rel_tol = t;
    }
    if c.t_end.is_some() {
        cfg.t_end = c.t_end;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_basis(cfg: &ScenarioConfig, model: Model, out: &Path) -> Result<()> {
    let setup = match model {
        Model::Decay => {
            let rho = *cfg.rho.first().context("no correlation given")?;
            decay_setup(rho, cfg.order())?
        }
        Model::Enzyme => enzyme_setup(
            &correlation_matrix(&cfg.correlation),
            cfg.order(),
            cfg.moment_samples,
            cfg.seed,
        )?,
    };
    std::fs::create_dir_all(out)?;
    setup
        .basis
        .to_json(BufWriter::new(File::create(out.join("basis.json"))?))?;
    setup
        .table
        .to_json(BufWriter::new(File::create(out.join("moments.json"))?))?;
    let residual = orthogonality_residual(&setup.basis, &setup.table)?;
    println!(
        "{} polynomials, dimension {}, orthogonality residual {residual:.3e}",
        setup.basis.len(),
        setup.basis.dimension()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Decay(c) => {
            let cfg = config_for(ScenarioKind::Decay, None, &c)?;
            let summary = run_decay(&cfg, &c.out)?;
            for case in &summary.cases {
                let f = &case.final_stats[0];
                log::info!(
                    "rho={} t={} mean={:.6} std={:.6}",
                    case.rho,
                    f.t,
                    f.mean,
                    f.std
                );
            }
        }
        Command::Enzyme(c) => {
            let cfg = config_for(ScenarioKind::Enzyme, None, &c)?;
            run_enzyme(&cfg, &c.out)?;
        }
        Command::Converge { common, hermite } => {
            let mut cfg = config_for(ScenarioKind::Converge, None, &common)?;
            cfg.hermite |= hermite;
            for row in run_convergence(&cfg, &common.out)? {
                println!(
                    "rho={} p={} eps_mu={:.3e} eps_sigma={:.3e}",
                    row.rho, row.p, row.eps_mu, row.eps_sigma
                );
            }
        }
        Command::Mc { common, model } => {
            let mc_model = match model {
                Model::Decay => ModelKind::Decay,
                Model::Enzyme => ModelKind::Enzyme,
            };
            let cfg = config_for(ScenarioKind::Mc, Some(mc_model), &common)?;
            run_mc_reference(&cfg, &common.out)?;
        }
        Command::Basis { common, model } => {
            let kind = match model {
                Model::Decay => ScenarioKind::Decay,
                Model::Enzyme => ScenarioKind::Enzyme,
            };
            let cfg = config_for(kind, None, &common)?;
            write_basis(&cfg, model, &common.out)?;
        }
    }
    Ok(())
}
