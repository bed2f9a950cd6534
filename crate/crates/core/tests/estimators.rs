mod common;

use common::{mixed_matrix, normal_vector};
use momineq::fullvector::Variant;
use momineq::linalg::{reduced_row_echelon, Matrix, Settings, Vector};
use momineq::montecarlo::{
    compute_metrics, rejection_rate, simulate_fullvector, simulate_fullvector_margins, size_correction, DesignPoint,
    FullVectorDesign, OmegaSpec,
};
use momineq::subvector::{cond_var_discrete, cond_var_nearest_neighbor, SubvectorProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn nearest_neighbour_recovers_average_heteroskedastic_variance() {
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let z = Matrix::from_fn(n, 1, |_, _| rng.random::<f64>());
    // A smooth conditional mean, which the matching has to difference out.
    let data = Matrix::from_fn(n, 1, |i, _| {
        let zi = z[(i, 0)];
        2.0 * zi + (1.0 + zi * zi).sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let v = cond_var_nearest_neighbor(&data, &z, 5).unwrap()[(0, 0)];
    assert!((v / (4.0 / 3.0) - 1.0).abs() <= 0.05, "{v}");
}

#[test]
fn discrete_estimator_is_unbiased() {
    // Three groups of unequal size with different means, common Σ.
    let sizes = [4usize, 7, 12];
    let means = [[0.0, 1.0], [5.0, -2.0], [-3.0, 0.5]];
    let truth = Matrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let l = truth.clone().cholesky().unwrap().l();
    let labels: Vec<u32> = sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g as u32, s)).collect();
    let n = labels.len();
    let reps = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sum = Matrix::zeros(2, 2);
    let mut sum_sq = Matrix::zeros(2, 2);
    for _ in 0..reps {
        let mut data = Matrix::zeros(n, 2);
        for (i, &g) in labels.iter().enumerate() {
            let e = &l * normal_vector(&mut rng, 2);
            data[(i, 0)] = means[g as usize][0] + e[0];
            data[(i, 1)] = means[g as usize][1] + e[1];
        }
        let v = cond_var_discrete(&data, &labels).unwrap();
        sum += &v;
        sum_sq += v.component_mul(&v);
    }
    let mean = &sum / reps as f64;
    for i in 0..2 {
        for j in 0..2 {
            let var = sum_sq[(i, j)] / reps as f64 - mean[(i, j)].powi(2);
            let se = (var / reps as f64).sqrt();
            assert!((mean[(i, j)] - truth[(i, j)]).abs() <= 2.0 * se, "({i},{j}): {} vs {} (se {se})", mean[(i, j)], truth[(i, j)]);
        }
    }
}

/// Smallest `c` on a grid of step `h` with maximum null rejection at most `α`.
fn grid_correction(margins: &[Vec<f64>], null: &[usize], alpha: f64, h: f64) -> f64 {
    let rate = |c: f64| null.iter().map(|&i| rejection_rate(&margins[i], c)).fold(0.0, f64::max);
    let mut c = -5.0;
    while rate(c) > alpha {
        c += h;
    }
    c
}

#[test]
fn size_correction_matches_a_direct_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20 {
        // Null points with 1000 stored margins each; the first has a known
        // number of exceedances above zero.
        let shift = if case % 2 == 0 { 0.3 } else { -0.4 };
        let mut margins: Vec<Vec<f64>> =
            (0..3).map(|_| (0..1000).map(|_| rng.random_range(-2.0..1.0) + shift).collect()).collect();
        let exceed = 30 + case * 3;
        margins[0] = (0..1000).map(|i| if i < exceed { rng.random_range(0.01..1.0) } else { rng.random_range(-2.0..0.0) }).collect();
        margins.push((0..1000).map(|_| rng.random_range(-1.0..3.0)).collect());
        let null = [0, 1, 2];
        let alt = [3];
        assert!((rejection_rate(&margins[0], 0.0) - exceed as f64 / 1000.0).abs() < 1e-15);
        let c = size_correction(&margins, &null, 0.05);
        let grid = grid_correction(&margins, &null, 0.05, 1e-4);
        let m = compute_metrics(&margins, &null, &alt, 0.05);
        assert_eq!(m.size_correction, Some(c));
        if c == 0.0 {
            // Zero rule: lowering the critical value to the grid point would not change a null decision.
            assert!(grid <= 1e-4);
            let rate = |s: f64| null.iter().map(|&i| rejection_rate(&margins[i], s)).fold(0.0, f64::max);
            assert_eq!(rate(grid.min(0.0) + 1e-12), rate(0.0));
        } else {
            assert!(grid >= c - 1e-12 && grid < c + 1e-4 + 1e-12, "case {case}: bisection {c}, grid {grid}");
        }
        assert!((m.sc_wap.unwrap() - rejection_rate(&margins[3], c)).abs() < 1e-15);
    }
}

#[test]
fn monte_carlo_standard_errors_scale_with_replications() {
    let point = DesignPoint { mu: vec![0.0, 0.0], null: None, label: None };
    let se: Vec<f64> = [1_000usize, 10_000, 100_000]
        .iter()
        .map(|&s| {
            let design = FullVectorDesign::new(2, OmegaSpec::Zero, vec![point.clone()], s, 17);
            simulate_fullvector(&design, &[Variant::Rcc], &Settings::default()).unwrap().results[0].points[0].std_error
        })
        .collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 10f64.sqrt() - 1.0).abs() <= 0.2, "{se:?}");
    }
}

#[test]
fn stored_decisions_satisfy_the_sandwich() {
    let points = vec![
        DesignPoint { mu: vec![0.0, 0.0, 0.0], null: None, label: None },
        DesignPoint { mu: vec![0.0, 0.1, 0.5], null: None, label: None },
        DesignPoint { mu: vec![-0.2, 0.0, 1.0], null: None, label: None },
    ];
    let mut design = FullVectorDesign::new(3, OmegaSpec::Toeplitz { rho: 0.6 }, points, 3000, 5);
    design.n = 50;
    let tests = [(Variant::Cc, 0.05), (Variant::Rcc, 0.05), (Variant::Rcc, 0.025)];
    let m = simulate_fullvector_margins(&design, &tests, &Settings::default()).unwrap();
    for pi in 0..3 {
        for r in 0..3000 {
            let (cc, rcc, rcc_half) = (m[0][pi][r] > 0.0, m[1][pi][r] > 0.0, m[2][pi][r] > 0.0);
            assert!(!rcc_half || cc, "point {pi}, rep {r}");
            assert!(!cc || rcc, "point {pi}, rep {r}");
        }
    }
}

#[test]
fn subvector_refined_test_has_exact_conditional_size() {
    // μ₁ <= δ, μ₂ <= -δ, μ₃ <= δ eliminates to μ₁ + μ₂ <= 0 and μ₂ + μ₃ <= 0,
    // both binding at μ = 0.
    let b = Matrix::identity(3, 3);
    let c = Matrix::from_column_slice(3, 1, &[1.0, -1.0, 1.0]);
    let d = Vector::zeros(3);
    let sigma = Matrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 1.5, 0.4, -0.2, 0.4, 0.8]);
    let l = sigma.clone().cholesky().unwrap().l();
    let n = 200;
    let reps = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cache = momineq::subvector::VertexCache::new();
    let settings = Settings::default();
    let mut rejections = 0;
    for _ in 0..reps {
        let mean = &l * normal_vector(&mut rng, 3) / (n as f64).sqrt();
        let p = SubvectorProblem::new(b.clone(), c.clone(), d.clone(), mean, sigma.clone(), n, 0.05).unwrap();
        if p.run_test(Variant::Rcc, &settings, Some(&cache)).unwrap().reject {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    assert!((rate - 0.05).abs() <= 0.01, "{rate}");
}

#[test]
fn parametric_form_rejects_points_off_the_null_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tol_feas = Settings::default().tolerances.tol_feas;
    let mut checked = 0;
    while checked < 1000 {
        let rows = rng.random_range(1..=4);
        let cols = rng.random_range(2..=6);
        let integer = rng.random_bool(0.5);
        let e = mixed_matrix(&mut rng, rows, cols, integer);
        let ech = reduced_row_echelon(&e, 1e-10);
        if ech.pivots.is_empty() {
            continue;
        }
        let free = normal_vector(&mut rng, ech.free.len());
        let mut h = Vector::zeros(cols);
        for (j, &f) in ech.free.iter().enumerate() {
            h[f] = free[j];
        }
        let piv = &ech.g1 * &free;
        for (i, &p) in ech.pivots.iter().enumerate() {
            h[p] = piv[i];
        }
        // Break the parametric relation on one pivot coordinate.
        let which = ech.pivots[rng.random_range(0..ech.pivots.len())];
        h[which] += if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.1..2.0);
        assert!((&e * &h).amax() > tol_feas, "E = {e}, h = {h}");
        checked += 1;
    }
}
