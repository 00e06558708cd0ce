use std::path::Path;

use corrpce::galerkin::DopriOptions;
use corrpce::moments::GaussianSampler;
use corrpce::scenarios::{
    convergence_study, decay_covariance, decay_model, decay_setup, mc_reference, run_convergence,
    run_decay, run_enzyme, run_mc_reference, CorrelationSetting, ModelKind, ScenarioConfig,
    ScenarioKind, CONVERGENCE_TOL, DECAY_MEAN,
};
use corrpce::stats::{mean_series, std_series};

// E[beta (1 - e^-alpha)] at t = 1 for the bivariate Gaussian.
fn decay_mean(rho: f64) -> f64 {
    let s2 = 0.0625;
    1.0 - (1.0 - rho * s2) * (-1.0 + 0.5 * s2).exp()
}

#[test]
fn monte_carlo_reference_recovers_closed_form_means() {
    for rho in [0.0, -0.5] {
        let sampler = GaussianSampler::new(&DECAY_MEAN, &decay_covariance(rho)).unwrap();
        let r = mc_reference(
            &decay_model(),
            &sampler,
            100_000,
            7,
            (0.0, 1.0),
            &[1.0],
            &DopriOptions::default(),
        )
        .unwrap();
        assert_eq!(r.skipped, 0);
        let (m, se) = (r.mean[0][0], r.se_mean[0][0]);
        assert!(
            (m - decay_mean(rho)).abs() < 3.0 * se,
            "rho={rho}: {m} vs {}",
            decay_mean(rho)
        );
    }
    assert!((decay_mean(-0.5) - 0.608581).abs() < 1e-6);
}

#[test]
fn point_mass_has_zero_spread() {
    let sampler = GaussianSampler::new(&DECAY_MEAN, &[[0.0, 0.0], [0.0, 0.0]]).unwrap();
    let times = [0.25, 0.5, 1.0];
    let r = mc_reference(
        &decay_model(),
        &sampler,
        1000,
        1,
        (0.0, 1.0),
        &times,
        &DopriOptions::default(),
    )
    .unwrap();
    assert!(r.std[0].iter().all(|&s| s == 0.0), "{:?}", r.std);
    assert!(r.se_mean[0].iter().all(|&s| s == 0.0));
}

#[test]
fn too_few_reference_samples_rejected() {
    let sampler = GaussianSampler::new(&DECAY_MEAN, &decay_covariance(0.0)).unwrap();
    assert!(mc_reference(
        &decay_model(),
        &sampler,
        999,
        1,
        (0.0, 1.0),
        &[1.0],
        &DopriOptions::default()
    )
    .is_err());
}

#[test]
fn convergence_columns_shrink() {
    for rho in [0.0, 0.5, -0.9] {
        let rows = convergence_study(rho, 8, 1.0, false).unwrap();
        assert_eq!(rows.len(), 7);
        let last = rows.last().unwrap();
        assert!(last.eps_sigma > 0.0);
        assert!(rows
            .iter()
            .all(|r| last.eps_sigma <= r.eps_sigma && last.eps_mu <= r.eps_mu));
        for p in [2, 4] {
            assert!(
                rows[p + 1].eps_sigma / rows[p - 1].eps_sigma < 0.3,
                "rho={rho} p={p}"
            );
        }
    }
}

#[test]
fn hermite_pipeline_reproduces_independent_column() {
    let gs = convergence_study(0.0, 8, 1.0, false).unwrap();
    let he = convergence_study(0.0, 8, 1.0, true).unwrap();
    for (a, b) in gs.iter().zip(&he) {
        assert_eq!(a.p, b.p);
        assert!((a.eps_mu - b.eps_mu).abs() <= 1e-14, "{a:?} {b:?}");
        assert!((a.eps_sigma - b.eps_sigma).abs() <= 1e-14, "{a:?} {b:?}");
    }
    assert!(convergence_study(0.5, 8, 1.0, true).is_err());
}

#[test]
fn successive_orders_form_cauchy_sequence() {
    let opts = DopriOptions {
        abs_tol: CONVERGENCE_TOL,
        rel_tol: CONVERGENCE_TOL,
        ..Default::default()
    };
    for rho in [0.5, -0.5] {
        let reference = decay_setup(rho, 8)
            .unwrap()
            .solve((0.0, 1.0), &[1.0], &opts)
            .unwrap();
        let stats: Vec<(f64, f64)> = (2..=8)
            .map(|p| {
                let setup = decay_setup(rho, p).unwrap();
                let sol = setup
                    .solve_on_steps(reference.steps(), 1.0, &[1.0])
                    .unwrap();
                (
                    mean_series(&sol)[0][0],
                    std_series(&sol, &setup.basis).unwrap()[0][0],
                )
            })
            .collect();
        let gaps: Vec<(f64, f64)> = stats
            .windows(2)
            .map(|w| ((w[1].0 - w[0].0).abs(), (w[1].1 - w[0].1).abs()))
            .collect();
        for g in gaps.windows(2) {
            assert!(g[1].1 < g[0].1, "rho={rho}: {gaps:?}");
            assert!(g[1].0 <= g[0].0, "rho={rho}: {gaps:?}");
        }
    }
}

fn header_of(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(String::from)
        .collect()
}

fn assert_header(path: &Path, config: &ScenarioConfig, order: u32) {
    let h = header_of(path);
    let find = |key: &str| {
        h.iter()
            .find_map(|l| l.strip_prefix(&format!("# {key}: ")))
            .unwrap_or_else(|| panic!("{} lacks {key}", path.display()))
            .to_string()
    };
    assert_eq!(find("config_hash"), config.hash());
    assert_eq!(find("seeds"), config.seed.to_string());
    assert_eq!(find("order"), order.to_string());
    assert!(!find("moments").is_empty());
}

#[test]
fn decay_outputs_and_headers() {
    let dir = tempfile::tempdir().unwrap();
    let config = ScenarioConfig {
        rho: vec![0.5, -1.0],
        order: Some(4),
        grid_points: 11,
        ..ScenarioConfig::for_scenario(ScenarioKind::Decay)
    };
    let summary = run_decay(&config, dir.path()).unwrap();
    assert_eq!(summary.cases.len(), 2);
    assert_eq!(summary.cases[1].reduced_dim, 1);
    for sub in ["rho_0.5", "rho_-1"] {
        for f in ["mean_std.csv", "sobol.csv", "sobol_total.csv"] {
            assert_header(&dir.path().join(sub).join(f), &config, 4);
        }
    }
    let text = std::fs::read_to_string(dir.path().join("rho_0.5/mean_std.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t,state,mean,std");
    assert_eq!(rows.len(), 12);
    assert!(rows[1].starts_with("0,y,0,0"), "{}", rows[1]);
    let sobol = std::fs::read_to_string(dir.path().join("rho_0.5/sobol.csv")).unwrap();
    assert!(sobol
        .lines()
        .any(|l| l.starts_with("t,state,subset,S,S_u,S_c")));
    // Zero variance at t = 0 leaves the indices undefined.
    assert!(sobol.lines().any(|l| l.starts_with("0,y,1,undefined")));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn enzyme_and_reference_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = ScenarioConfig {
        correlation: CorrelationSetting::Paper,
        order: Some(2),
        moment_samples: 20_000,
        seed: 3,
        grid_points: 5,
        ..ScenarioConfig::for_scenario(ScenarioKind::Enzyme)
    };
    let s = run_enzyme(&config, dir.path()).unwrap();
    assert_eq!(s.basis_size, 10);
    assert_eq!(s.final_stats.len(), 4);
    for f in ["mean_std.csv", "sobol.csv", "sobol_total.csv"] {
        assert_header(&dir.path().join(f), &config, 2);
    }
    let totals = std::fs::read_to_string(dir.path().join("sobol_total.csv")).unwrap();
    assert!(totals.contains("P,3,"));

    let mc_dir = tempfile::tempdir().unwrap();
    let mc = ScenarioConfig {
        mc_model: ModelKind::Enzyme,
        mc_samples: 2000,
        seed: 3,
        grid_points: 5,
        ..ScenarioConfig::for_scenario(ScenarioKind::Mc)
    };
    let refs = run_mc_reference(&mc, mc_dir.path()).unwrap();
    assert_eq!(refs.len(), 1);
    assert_header(&mc_dir.path().join("mc_mean_std.csv"), &mc, 0);
}

#[test]
fn convergence_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = ScenarioConfig {
        rho: vec![0.0],
        order: Some(4),
        ..ScenarioConfig::for_scenario(ScenarioKind::Converge)
    };
    let rows = run_convergence(&config, dir.path()).unwrap();
    assert_eq!(rows.len(), 3);
    let path = dir.path().join("convergence.csv");
    assert_header(&path, &config, 4);
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.lines().any(|l| l == "rho,p,eps_mu,eps_sigma"));
}

#[test]
fn invalid_correlation_rejected() {
    let config = ScenarioConfig {
        rho: vec![1.5],
        ..ScenarioConfig::for_scenario(ScenarioKind::Decay)
    };
    assert!(run_decay(&config, Path::new("unused")).is_err());
}
