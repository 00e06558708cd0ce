use proptest::prelude::*;

use corrpce::basis::{build_basis, gram_schmidt_basis, input_expansion};
use corrpce::galerkin::{compile_model, GalerkinModel, Term};
use corrpce::moments::{gaussian_moment_table, MomentTable};
use corrpce::polyalg::{
    basis_size, enumerate_basis_indices, expectation, poly_product, MultiIndex, Polynomial,
};
use corrpce::scenarios::{decay_model, table_order, PceSetup};
use corrpce::stats::{mean_series, sobol_report, std_series};

fn decay_table(rho: f64, order: u32) -> MomentTable {
    let v = 0.0625;
    gaussian_moment_table(&[1.0, 1.0], &[[v, rho * v], [rho * v, v]], order).unwrap()
}

fn sparse_poly(max_deg: u32, origin: f64) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(((0..=max_deg, 0..=max_deg), -3i32..=3), 1..6).prop_map(move |terms| {
        Polynomial::from_terms(
            2,
            vec![origin, origin],
            terms.into_iter().map(|((a, b), c)| {
                (
                    MultiIndex::new(vec![a.min(max_deg - b), b]),
                    c as f64,
                )
            }),
        )
        .unwrap()
    })
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expectation_of_product_is_symmetric_and_bilinear(
        rho in -0.95f64..0.95,
        a in sparse_poly(4, 0.0),
        b in sparse_poly(4, 1.0),
        c in sparse_poly(4, 0.5),
        lambda in -2.0f64..2.0,
    ) {
        let t = decay_table(rho, 16);
        let e = |x: &Polynomial, y: &Polynomial| expectation(&poly_product(x, y).unwrap(), &t).unwrap();
        let ab = e(&a, &b);
        let ba = e(&b, &a);
        let scale = 1.0 + ab.abs();
        prop_assert!((ab - ba).abs() <= 1e-12 * scale);
        let mixed = a.add_scaled(&c, lambda).unwrap();
        let lhs = e(&mixed, &b);
        let rhs = ab + lambda * e(&c, &b);
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (scale + e(&c, &b).abs()));
    }

    #[test]
    fn product_degree_is_additive(a in sparse_poly(4, 0.0), b in sparse_poly(4, 0.0)) {
        prop_assume!(!a.is_empty() && !b.is_empty());
        prop_assert_eq!(poly_product(&a, &b).unwrap().degree(), a.degree() + b.degree());
    }

    #[test]
    fn index_count_is_binomial(n in 1usize..=5, p in 0usize..=8) {
        let want = binomial((n + p) as u64, p as u64) as usize;
        prop_assert_eq!(basis_size(n, p).unwrap(), want);
        prop_assert_eq!(enumerate_basis_indices(n, p).unwrap().len(), want);
    }

    #[test]
    fn tensors_are_symmetric_with_identity_block(rho in -0.95f64..0.95, p in 1u32..=3, r0 in 0u32..=2, r1 in 0u32..=2) {
        let model = GalerkinModel::new(
            vec!["y".into()],
            2,
            vec![Term::new(0, 1.0, vec![0, 0], vec![0]), Term::new(0, -0.5, vec![r0, r1], vec![0, 0])],
            vec![1.0],
        )
        .unwrap();
        let t = decay_table(rho, table_order(&model, p));
        let basis = build_basis(&t, p).unwrap();
        let tensors = compile_model(&model, &basis, &t).unwrap();
        let n = basis.len();
        let id = tensors.block(&MultiIndex::new(vec![0, 0]), 1).unwrap();
        for i in 0..n {
            for k in 0..n {
                let want = if i == k { 1.0 } else { 0.0 };
                prop_assert!((id.t1(i, k) - want).abs() <= 1e-10);
            }
        }
        let quad = tensors.block(&MultiIndex::new(vec![r0, r1]), 2).unwrap();
        let big = (0..n * n * n).map(|x| quad.t2(x / (n * n), x / n % n, x % n).abs()).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    prop_assert!((quad.t2(i, j, k) - quad.t2(j, i, k)).abs() <= 1e-12 * big);
                }
            }
        }
    }

    #[test]
    fn input_expansion_satisfies_parseval(rho in -0.95f64..0.95, p in 1u32..=6) {
        let t = decay_table(rho, 2 * p);
        let basis = build_basis(&t, p).unwrap();
        let ex = input_expansion(&basis, &t).unwrap();
        for l in 0..2 {
            let energy: f64 = ex.coefficients[l].iter().zip(basis.sq_norms()).map(|(c, n)| c * c * n).sum();
            let second = t.raw_moment(&MultiIndex::unit(2, l).add(&MultiIndex::unit(2, l))).unwrap();
            prop_assert!((energy - second).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sobol_decomposition_is_consistent(rho in -0.99f64..0.99, p in 2u32..=5) {
        let model = decay_model();
        let t = decay_table(rho, table_order(&model, p));
        let setup = PceSetup::new(model, None, t, p).unwrap();
        let times = corrpce::galerkin::uniform_grid(0.0, 1.0, 11);
        let sol = setup.solve((0.0, 1.0), &times, &Default::default()).unwrap();
        let rep = sobol_report(&sol, &setup.basis, &setup.table, &times).unwrap();
        for point in rep.points.iter().filter(|p| p.defined) {
            // sum over subsets of Var[M] + Cov[M, u - M] is the total variance
            let total: f64 = point.subsets.iter().map(|e| e.s_u + e.s_c).sum();
            prop_assert!((total - 1.0).abs() <= 1e-8);
            for e in &point.subsets {
                prop_assert!(e.s_u >= 0.0, "{:?}", e);
                prop_assert!((e.s - e.s_u - e.s_c).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn within_degree_reordering_leaves_statistics_unchanged() {
    let model = decay_model();
    let p = 5;
    let t = decay_table(0.7, table_order(&model, p));
    let canonical = enumerate_basis_indices(2, p as usize).unwrap();
    let mut shuffled = canonical.clone();
    for d in 1..=p {
        let s = shuffled.iter().position(|i| i.degree() == d).unwrap();
        let e = shuffled.iter().rposition(|i| i.degree() == d).unwrap();
        shuffled[s..=e].reverse();
    }
    let a = PceSetup::new(model.clone(), None, t.clone(), p).unwrap();
    let b = PceSetup::with_basis(
        model,
        None,
        t.clone(),
        gram_schmidt_basis(&shuffled, &t).unwrap(),
    )
    .unwrap();
    assert_ne!(a.basis.polys(), b.basis.polys());
    let times = corrpce::galerkin::uniform_grid(0.0, 1.0, 5);
    let sa = a.solve((0.0, 1.0), &times, &Default::default()).unwrap();
    let sb = b.solve_on_steps(sa.steps(), 1.0, &times).unwrap();
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9;
    let (ma, mb) = (mean_series(&sa), mean_series(&sb));
    let (da, db) = (
        std_series(&sa, &a.basis).unwrap(),
        std_series(&sb, &b.basis).unwrap(),
    );
    for ti in 0..times.len() {
        assert!(close(ma[0][ti], mb[0][ti]));
        assert!(close(da[0][ti], db[0][ti]));
    }
    let ra = sobol_report(&sa, &a.basis, &a.table, &times).unwrap();
    let rb = sobol_report(&sb, &b.basis, &b.table, &times).unwrap();
    for (pa, pb) in ra.points.iter().zip(&rb.points) {
        for (ea, eb) in pa.subsets.iter().zip(&pb.subsets) {
            assert!(
                close(ea.s, eb.s) && close(ea.s_u, eb.s_u) && close(ea.s_c, eb.s_c),
                "{ea:?} vs {eb:?}"
            );
        }
    }
}
