#![allow(dead_code)]

use momineq::fullvector::{FullVectorProblem, TestOutcome, Variant};
use momineq::linalg::{Matrix, PolyhedralSpec, Settings, Vector};
use momineq::subvector::{eliminate_nuisance, SubvectorProblem};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector<R: Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random SPD matrix with condition number kept moderate.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize) -> Matrix {
    let g = normal_matrix(rng, d, d);
    &g * g.transpose() / d as f64 + Matrix::identity(d, d) * 0.5
}

/// Entries that are small integers half of the time, so that collinear and
/// simultaneously active rows occur.
pub fn mixed_matrix<R: Rng>(rng: &mut R, r: usize, c: usize, integer: bool) -> Matrix {
    Matrix::from_fn(r, c, |_, _| {
        if integer {
            rng.random_range(-2..=2) as f64
        } else {
            rng.sample(StandardNormal)
        }
    })
}

pub fn random_subvector<R: Rng>(rng: &mut R) -> SubvectorProblem {
    let k = rng.random_range(1..=6);
    let p = rng.random_range(1..=2);
    let dm = rng.random_range(1..=3);
    let integer = rng.random_bool(0.5);
    let b = mixed_matrix(rng, k, dm, integer);
    let c = mixed_matrix(rng, k, p, integer);
    // Feasible by construction: (μ₀, δ₀) satisfies every row, some with equality.
    let mu0 = normal_vector(rng, dm);
    let delta0 = normal_vector(rng, p);
    let slack = Vector::from_fn(k, |_, _| if rng.random_bool(0.5) { 0.0 } else { rng.random::<f64>() });
    let d = if rng.random_bool(0.3) { Vector::zeros(k) } else { &b * &mu0 - &c * &delta0 + slack };
    let mean = normal_vector(rng, dm) * 2.0;
    let variance = random_spd(rng, dm);
    let n = rng.random_range(1..=50);
    SubvectorProblem::new(b, c, d, mean, variance, n, 0.05).unwrap()
}

/// Full-vector test on the explicitly eliminated system; an empty system
/// leaves the moments unrestricted.
pub fn eliminated_outcome(p: &SubvectorProblem, variant: Variant, settings: &Settings) -> Option<TestOutcome> {
    let sys = eliminate_nuisance(&p.b, &p.c, &p.d, settings, None).unwrap();
    if sys.a.nrows() == 0 {
        return None;
    }
    let spec = PolyhedralSpec::new(sys.a, sys.b).unwrap();
    let full = FullVectorProblem::new(p.mean.clone(), p.variance.clone(), p.n, spec, p.alpha).unwrap();
    Some(full.run_test(variant, settings).unwrap())
}

/// Full-vector problem with a nonempty polyhedron, a mix of binding and
/// slack rows, and duplicated or integer rows half of the time.
pub fn random_full<R: Rng>(rng: &mut R) -> FullVectorProblem {
    let d = rng.random_range(1..=4);
    let k = rng.random_range(1..=6);
    let integer = rng.random_bool(0.5);
    let a = mixed_matrix(rng, k, d, integer);
    let mu0 = normal_vector(rng, d);
    let slack = Vector::from_fn(k, |_, _| if rng.random_bool(0.5) { 0.0 } else { rng.random::<f64>() });
    let b = &a * &mu0 + slack;
    let n = rng.random_range(1..=100);
    let scale = rng.random_range(0.1..3.0) / (n as f64).sqrt();
    let mean = &mu0 + normal_vector(rng, d) * scale;
    let variance = random_spd(rng, d);
    let spec = PolyhedralSpec::new(a, b).unwrap();
    FullVectorProblem::new(mean, variance, n, spec, 0.05).unwrap()
}

/// Problem whose projection lands on a single hyperplane written as several
/// positively scaled copies, so `r̂ = 1` with more than one active row.
pub fn rank_one_duplicated<R: Rng>(rng: &mut R) -> FullVectorProblem {
    let d = rng.random_range(1..=4);
    let a = normal_vector(rng, d);
    let copies = rng.random_range(2..=3);
    let extra = rng.random_range(0..=3);
    let beta = rng.sample::<f64, _>(StandardNormal);
    let n = rng.random_range(1..=100);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for _ in 0..copies {
        let c = rng.random_range(0.2..5.0);
        rows.push(a.transpose() * c);
        rhs.push(beta * c);
    }
    // The other rows keep a margin at the projection onto the hyperplane.
    let foot = &a * (beta / a.norm_squared());
    for _ in 0..extra {
        let g = normal_vector(rng, d);
        rows.push(g.transpose());
        rhs.push(g.dot(&foot) + rng.random_range(0.05..2.0));
    }
    let a_mat = Matrix::from_rows(&rows);
    let variance = random_spd(rng, d);
    // Move off the hyperplane along the Σ a direction so that the row binds.
    let dir = &variance * &a;
    let push = rng.random_range(0.5..4.0) / ((n as f64).sqrt() * a.dot(&dir).sqrt());
    let mean = foot + dir * push;
    let spec = PolyhedralSpec::new(a_mat, Vector::from_vec(rhs)).unwrap();
    FullVectorProblem::new(mean, variance, n, spec, 0.05).unwrap()
}

fn gamma_half(r: u32) -> f64 {
    // Γ(r/2) from Γ(1/2) = √π and Γ(1) = 1.
    let (mut g, mut k) = if r % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while k < r as f64 / 2.0 - 1e-12 {
        g *= k;
        k += 1.0;
    }
    g
}

/// `P(χ²_r <= x)` by composite Simpson integration of the density after the
/// substitution `x = u²`, which removes the singularity at zero for `r = 1`.
pub fn simpson_cdf(r: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let norm = 2f64.powf(r as f64 / 2.0) * gamma_half(r);
    let f = |u: f64| 2.0 * u.powi(r as i32 - 1) * (-u * u / 2.0).exp() / norm;
    let upper = x.sqrt();
    let m = 20_000;
    let h = upper / m as f64;
    let mut s = f(0.0) + f(upper);
    for i in 1..m {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn bisect(cdf: impl Fn(f64) -> f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 200.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
