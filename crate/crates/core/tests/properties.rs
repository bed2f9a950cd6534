mod common;

use common::{mixed_matrix, normal_vector, random_full, random_subvector, rank_one_duplicated};
use momineq::dist::{chi2_cdf, chi2_quantile};
use momineq::fullvector::{tau_with_reference, FullVectorProblem, Variant};
use momineq::linalg::{project_polyhedron, reduced_row_echelon, Matrix, PolyhedralSpec, Settings, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn with_alpha(p: &FullVectorProblem, alpha: f64) -> FullVectorProblem {
    FullVectorProblem { alpha, ..p.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_idempotent(seed in any::<u64>()) {
        let p = random_full(&mut rng(seed));
        let tol = Settings::default().tolerances;
        let metric = &p.variance / p.n as f64;
        let first = project_polyhedron(&p.mean, &metric, &p.spec, &tol).unwrap();
        let second = project_polyhedron(&first.point, &metric, &p.spec, &tol).unwrap();
        let scale = 1.0 + first.point.amax();
        prop_assert!((&second.point - &first.point).amax() <= 1e-9 * scale);
        prop_assert!(second.distance_sq <= 1e-12 * scale * scale);
    }

    #[test]
    fn positive_row_scaling_changes_nothing(seed in any::<u64>(), variant in prop_oneof![Just(Variant::Cc), Just(Variant::Rcc)]) {
        let mut r = rng(seed);
        let p = random_full(&mut r);
        let k = p.spec.n_constraints();
        let factors: Vec<f64> = (0..k).map(|_| 10f64.powf(r.random_range(-1.0..1.0))).collect();
        let a = Matrix::from_fn(k, p.spec.dim(), |i, j| p.spec.a[(i, j)] * factors[i]);
        let b = Vector::from_fn(k, |i, _| p.spec.b[i] * factors[i]);
        let scaled = FullVectorProblem { spec: PolyhedralSpec::new(a, b).unwrap(), ..p.clone() };
        let s = Settings::default();
        let x = p.run_test(variant, &s).unwrap();
        let y = scaled.run_test(variant, &s).unwrap();
        let scale = 1.0 + x.statistic;
        prop_assert!((x.statistic - y.statistic).abs() <= 1e-8 * scale);
        for (u, v) in x.restricted_estimate.iter().zip(&y.restricted_estimate) {
            prop_assert!((u - v).abs() <= 1e-8 * (1.0 + u.abs()));
        }
        prop_assert_eq!(x.r_hat, y.r_hat);
        prop_assert!((x.beta_hat - y.beta_hat).abs() <= 1e-8);
        match (x.tau_hat, y.tau_hat) {
            (None, None) => {}
            (Some(t), Some(u)) if t.is_infinite() || u.is_infinite() => prop_assert_eq!(t, u),
            (Some(t), Some(u)) => prop_assert!((t - u).abs() <= 1e-8 * (1.0 + t.abs())),
            other => prop_assert!(false, "tau presence differs: {:?}", other),
        }
        // Decisions may only differ when the statistic sits on the critical value.
        if (x.statistic - x.critical_value).abs() > 1e-7 * scale {
            prop_assert_eq!(x.reject, y.reject);
        }
    }

    #[test]
    fn tau_does_not_depend_on_the_reference_row(seed in any::<u64>()) {
        let p = rank_one_duplicated(&mut rng(seed));
        let s = Settings::default();
        let stat = p.compute_statistic(&s).unwrap();
        prop_assume!(stat.rank == 1 && stat.active_set.len() >= 2);
        let taus: Vec<f64> = stat
            .active_set
            .iter()
            .map(|&j| tau_with_reference(&p.spec, &stat.restricted_estimate, &p.variance, p.n, j, s.tolerances.tol_rank).unwrap())
            .collect();
        for t in &taus[1..] {
            if taus[0].is_infinite() {
                prop_assert!(t.is_infinite());
            } else {
                prop_assert!((t - taus[0]).abs() <= 1e-8 * (1.0 + taus[0].abs()), "{:?}", taus);
            }
        }
    }

    #[test]
    fn rcc_sits_between_cc_at_alpha_and_twice_alpha(seed in any::<u64>(), alpha in 0.005f64..0.2) {
        let p = with_alpha(&random_full(&mut rng(seed)), alpha);
        let s = Settings::default();
        let cc = p.run_test(Variant::Cc, &s).unwrap();
        let rcc = p.run_test(Variant::Rcc, &s).unwrap();
        let cc2 = with_alpha(&p, 2.0 * alpha).run_test(Variant::Cc, &s).unwrap();
        prop_assert!(!cc.reject || rcc.reject);
        prop_assert!(!rcc.reject || cc2.reject);
        prop_assert!(rcc.beta_hat >= alpha - 1e-15 && rcc.beta_hat <= 2.0 * alpha + 1e-15);
    }

    #[test]
    fn rejection_is_monotone_in_alpha(seed in any::<u64>(), lo in 0.005f64..0.2, gap in 0.0f64..0.2) {
        let p = random_full(&mut rng(seed));
        let s = Settings::default();
        for v in [Variant::Cc, Variant::Rcc] {
            let strict = with_alpha(&p, lo).run_test(v, &s).unwrap();
            let loose = with_alpha(&p, lo + gap).run_test(v, &s).unwrap();
            prop_assert!(!strict.reject || loose.reject);
        }
    }

    #[test]
    fn an_equality_pair_gives_beta_alpha(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = r.random_range(1..=4);
        let a = normal_vector(&mut r, d);
        let beta: f64 = r.random_range(-2.0..2.0);
        let mut rows = vec![a.transpose(), -a.transpose()];
        let mut rhs = vec![beta, -beta];
        let foot = &a * (beta / a.norm_squared());
        for _ in 0..r.random_range(0..=2) {
            let g = normal_vector(&mut r, d);
            rows.push(g.transpose());
            rhs.push(g.dot(&foot) + r.random_range(0.1..2.0));
        }
        let variance = common::random_spd(&mut r, d);
        let n = r.random_range(1..=50);
        let mean = &foot + &variance * &a * (r.random_range(-3.0..3.0) / (n as f64).sqrt());
        let spec = PolyhedralSpec::new(Matrix::from_rows(&rows), Vector::from_vec(rhs)).unwrap();
        let p = FullVectorProblem::new(mean, variance, n, spec, 0.05).unwrap();
        let out = p.run_test(Variant::Rcc, &Settings::default()).unwrap();
        prop_assume!(out.r_hat == 1);
        prop_assert!((out.beta_hat - 0.05).abs() <= 1e-15);
    }

    #[test]
    fn parametric_form_spans_the_null_space(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rows = r.random_range(1..=4);
        let cols = r.random_range(1..=6);
        let integer = r.random_bool(0.5);
        let e = mixed_matrix(&mut r, rows, cols, integer);
        let ech = reduced_row_echelon(&e, 1e-10);
        prop_assert_eq!(ech.pivots.len() + ech.free.len(), cols);
        // Any choice of the free coordinates solves E h = 0.
        let free = normal_vector(&mut r, ech.free.len());
        let mut h = Vector::zeros(cols);
        for (j, &c) in ech.free.iter().enumerate() {
            h[c] = free[j];
        }
        if !ech.pivots.is_empty() {
            let piv = &ech.g1 * &free;
            for (i, &c) in ech.pivots.iter().enumerate() {
                h[c] = piv[i];
            }
        }
        let scale = 1.0 + e.amax() * h.amax();
        prop_assert!((&e * &h).amax() <= 1e-9 * scale);
        // The reduced rows carry an identity on the pivot columns.
        for (i, &c) in ech.pivots.iter().enumerate() {
            for k in 0..ech.pivots.len() {
                let want = if k == i { 1.0 } else { 0.0 };
                prop_assert!((ech.reduced[(k, c)] - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn profiling_never_exceeds_a_fixed_nuisance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_subvector(&mut r);
        let s = Settings::default();
        let t_sub = p.compute_statistic(&s).unwrap().value;
        for _ in 0..4 {
            let delta = normal_vector(&mut r, p.c.ncols()) * 2.0;
            let spec = PolyhedralSpec::new(p.b.clone(), &p.c * &delta + &p.d).unwrap();
            let full = FullVectorProblem::new(p.mean.clone(), p.variance.clone(), p.n, spec, p.alpha).unwrap();
            if let Ok(stat) = full.compute_statistic(&s) {
                prop_assert!(t_sub <= stat.value + 1e-6 * (1.0 + stat.value), "{} > {}", t_sub, stat.value);
            }
        }
    }
}

#[test]
fn chi2_quantile_is_monotone_on_the_grid() {
    let levels = [0.5, 0.9, 0.95, 0.975, 0.99];
    for r in 0..=20u32 {
        let q: Vec<f64> = levels.iter().map(|&p| chi2_quantile(r, p).unwrap()).collect();
        if r == 0 {
            assert!(q.iter().all(|&v| v == 0.0));
            continue;
        }
        assert!(q.windows(2).all(|w| w[0] < w[1]), "r = {r}: {q:?}");
        let prev: Vec<f64> = levels.iter().map(|&p| chi2_quantile(r - 1, p).unwrap()).collect();
        assert!(prev.iter().zip(&q).all(|(a, b)| a < b), "r = {r}");
        for (&p, &x) in levels.iter().zip(&q) {
            assert!((chi2_cdf(r, x) - p).abs() <= 1e-9, "r = {r}, p = {p}");
        }
    }
}
