use nalgebra::{DMatrix, SymmetricEigen};

use corrpce::galerkin::DopriOptions;
use corrpce::moments::{GaussianSampler, Sampler};
use corrpce::scenarios::{decay_covariance, decay_setup, DECAY_MEAN, DECAY_STD};
use corrpce::stats::{mean_series, sobol_report, std_series};

// Probabilists' Gauss-Hermite rule from the eigenpairs of the Jacobi matrix;
// weights sum to one.
fn gauss_hermite(k: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::zeros(k, k);
    for i in 1..k {
        let b = (i as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    (0..k)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect()
}

#[test]
fn sobol_matches_quadrature_of_marginal_integrals() {
    let rule = gauss_hermite(24);
    for (rho, p) in [(0.6, 3u32), (-0.8, 2), (0.0, 3)] {
        let setup = decay_setup(rho, p).unwrap();
        let sol = setup
            .solve((0.0, 1.0), &[1.0], &DopriOptions::default())
            .unwrap();
        let u = |x: f64, y: f64| sol.evaluate_surrogate(&setup.basis, &[x, y], 1.0).unwrap()[0];
        let at = |z: f64| DECAY_MEAN[0] + DECAY_STD * z;

        // Joint expectations over the correlated density.
        let c = (1.0 - rho * rho).sqrt();
        let joint = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
            let mut s = 0.0;
            for &(z1, w1) in &rule {
                for &(z2, w2) in &rule {
                    s += w1 * w2 * f(at(z1), at(rho * z1 + c * z2));
                }
            }
            s
        };
        let mean = joint(&|x, y| u(x, y));
        let var = joint(&|x, y| u(x, y).powi(2)) - mean * mean;
        // Integrals against the marginal density of the other variable.
        let m1 = |x: f64| rule.iter().map(|&(z, w)| w * u(x, at(z))).sum::<f64>() - mean;
        let m2 = |y: f64| rule.iter().map(|&(z, w)| w * u(at(z), y)).sum::<f64>() - mean;
        let parts: [&dyn Fn(f64, f64) -> f64; 3] = [&|x, _| m1(x), &|_, y| m2(y), &|x, y| {
            u(x, y) - mean - m1(x) - m2(y)
        }];
        let rep = sobol_report(&sol, &setup.basis, &setup.table, &[1.0]).unwrap();
        let point = rep.point(0, 1.0).unwrap();
        for (mask, f) in [1u32, 2, 3].into_iter().zip(parts) {
            let em = joint(f);
            let vm = joint(&|x, y| f(x, y).powi(2)) - em * em;
            let cov = joint(&|x, y| f(x, y) * u(x, y)) - em * mean;
            let e = point.subset(mask).unwrap();
            let want = [cov / var, vm / var, (cov - vm) / var];
            let got = [e.s, e.s_u, e.s_c];
            for (g, w) in got.iter().zip(want) {
                assert!(
                    (g - w).abs() <= 1e-6,
                    "rho={rho} p={p} subset={mask}: {got:?} vs {want:?}"
                );
            }
        }
    }
}

#[test]
fn statistics_match_sampled_surrogate() {
    let n = 100_000;
    for rho in [0.0, -0.5, 0.9] {
        let setup = decay_setup(rho, 6).unwrap();
        let sol = setup
            .solve((0.0, 1.0), &[0.5, 1.0], &DopriOptions::default())
            .unwrap();
        let mean = mean_series(&sol);
        let std = std_series(&sol, &setup.basis).unwrap();
        let draws = GaussianSampler::new(&DECAY_MEAN, &decay_covariance(rho))
            .unwrap()
            .sample_n(n, 21);
        for (ti, t) in [0.5, 1.0].into_iter().enumerate() {
            let ys: Vec<f64> = draws
                .rows()
                .map(|x| sol.evaluate_surrogate(&setup.basis, x, t).unwrap()[0])
                .collect();
            let m = ys.iter().sum::<f64>() / n as f64;
            let m2 = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n as f64;
            let m4 = ys.iter().map(|y| (y - m).powi(4)).sum::<f64>() / n as f64;
            let s = m2.sqrt();
            let se_mean = s / (n as f64).sqrt();
            let se_std = ((m4 - m2 * m2) / n as f64).sqrt() / (2.0 * s);
            assert!((mean[0][ti] - m).abs() <= 4.0 * se_mean, "rho={rho} t={t}");
            assert!((std[0][ti] - s).abs() <= 4.0 * se_std, "rho={rho} t={t}");
        }
    }
}
