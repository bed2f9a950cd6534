//! Subvector tests for `B E[m | Z] <= C δ + d` with an unrestricted nuisance
//! parameter `δ` entering linearly.
//!
//! The statistic is a joint projection over `(μ, δ)`. The rank of the
//! active part of the eliminated system is obtained without eliminating `δ`:
//! one LP per coordinate finds the implicit equalities of the active cone,
//! and the parametric form of what remains gives the rank. The vertices of
//! the elimination polytope are enumerated only for the refinement step.

mod variance;

pub use variance::{
    cond_var_discrete, cond_var_from_neighbors, cond_var_nearest_neighbor, nearest_neighbors, ConditionalVarianceMode,
};

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::fullvector::{
    apply_ridge, column_means, compute_tau, decide, validate_alpha, validate_covariance, Diagnostics, TestOutcome,
    Variant,
};
use crate::linalg::{
    active_set, cholesky_factor, enumerate_vertices, forward_substitute, matrix_rank, reduced_row_echelon, solve_lp,
    vstack, LpStatus, Matrix, PolyhedralSpec, Settings, Tolerances, Vector,
};

/// `B μ <= C δ + d` for some `δ`, tested at the conditional mean of the moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SubvectorProblem {
    pub b: Matrix,
    pub c: Matrix,
    pub d: Vector,
    pub mean: Vector,
    /// Estimate of `Var(√n m̄ | Z)`.
    pub variance: Matrix,
    pub n: usize,
    pub alpha: f64,
}

/// Result of the joint projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SubStatistic {
    pub value: f64,
    pub restricted_estimate: Vector,
    pub nuisance_estimate: Vector,
    /// `B μ̂ - C δ̂ - d` with entries within tolerance of zero set to zero.
    pub slack: Vector,
    /// Multipliers of the joint constraints.
    pub multipliers: Vector,
    pub kkt_residual: f64,
}

/// The eliminated system `H B μ <= H d`, where the rows of `H` are the
/// vertices of `{h >= 0, Cᵀh = 0, 1ᵀh = 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminatedSystem {
    pub h: Arc<Matrix>,
    pub a: Matrix,
    pub b: Vector,
}

impl EliminatedSystem {
    pub fn spec(&self) -> Result<PolyhedralSpec> {
        PolyhedralSpec::new(self.a.clone(), self.b.clone())
    }
}

/// Vertex matrices keyed by the exact bits of `C`, shared across the points
/// of a parameter grid.
#[derive(Debug, Default)]
pub struct VertexCache {
    map: RwLock<HashMap<(usize, usize, Vec<u64>), Arc<Matrix>>>,
}

impl VertexCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vertices(&self, c: &Matrix, settings: &Settings) -> Result<Arc<Matrix>> {
        let key = (c.nrows(), c.ncols(), c.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if let Some(h) = self.map.read().ok().and_then(|m| m.get(&key).cloned()) {
            return Ok(h);
        }
        let h = Arc::new(enumerate_vertices(c, settings)?);
        if let Ok(mut m) = self.map.write() {
            return Ok(m.entry(key).or_insert(h).clone());
        }
        Ok(h)
    }
}

/// Build `H(C)`, `H B` and `H d`.
pub fn eliminate_nuisance(
    b: &Matrix,
    c: &Matrix,
    d: &Vector,
    settings: &Settings,
    cache: Option<&VertexCache>,
) -> Result<EliminatedSystem> {
    let h = match cache {
        Some(cache) => cache.vertices(c, settings)?,
        None => Arc::new(enumerate_vertices(c, settings)?),
    };
    let (a, rhs) = if h.nrows() == 0 {
        (Matrix::zeros(0, b.ncols()), Vector::zeros(0))
    } else {
        (h.as_ref() * b, h.as_ref() * d)
    };
    Ok(EliminatedSystem { h, a, b: rhs })
}

/// Coordinates `j` with `h_j = 0` on the whole cone
/// `{h >= 0 : Cᵀh = 0, vᵀh = 0}`, found by one boxed LP each.
pub fn detect_implicit_equalities(c: &Matrix, v: &Vector, tol: &Tolerances) -> Result<Vec<usize>> {
    let k = c.nrows();
    if v.len() != k {
        return Err(Error::Dimension(format!("v has {} entries, C has {k} rows", v.len())));
    }
    let rows: Vec<Vec<f64>> = (0..c.ncols())
        .map(|j| c.column(j).iter().copied().collect())
        .chain(std::iter::once(v.iter().copied().collect()))
        .filter_map(|r: Vec<f64>| {
            let s = r.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            (s > 0.0).then(|| r.into_iter().map(|x| x / s).collect())
        })
        .collect();
    let eq = Matrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let rhs = Vector::zeros(rows.len());
    let bounds = vec![(0.0, 1.0); k];

    let mut positive = vec![false; k];
    let mut implicit = Vec::new();
    for j in 0..k {
        if positive[j] {
            continue;
        }
        let mut obj = Vector::zeros(k);
        obj[j] = -1.0;
        let res = solve_lp(&obj, &eq, &rhs, &bounds, tol).map_err(|e| Error::Lp { index: j, message: e.to_string() })?;
        if res.status != LpStatus::Optimal {
            return Err(Error::Lp { index: j, message: format!("cone LP reported {:?}", res.status) });
        }
        if res.value >= -tol.tol_feas {
            implicit.push(j);
        } else {
            for i in 0..k {
                if res.x[i] > tol.tol_feas {
                    positive[i] = true;
                }
            }
        }
    }
    Ok(implicit)
}

/// Rows of `m` scaled to unit max-norm; zero rows are dropped.
fn normalize_rows(m: &Matrix) -> Matrix {
    let keep: Vec<usize> = (0..m.nrows()).filter(|&i| m.row(i).amax() > 0.0).collect();
    let mut out = m.select_rows(&keep);
    for mut row in out.row_iter_mut() {
        let s = row.amax();
        row /= s;
    }
    out
}

/// Basis (as rows) of `{w : Mᵀ w = 0}`, from the parametric form.
fn left_null_basis(m: &Matrix, tol_rank: f64) -> Matrix {
    let rows = m.nrows();
    let ech = reduced_row_echelon(&m.transpose(), tol_rank);
    let mut basis = Matrix::zeros(ech.free.len(), rows);
    for (f, &col) in ech.free.iter().enumerate() {
        basis[(f, col)] = 1.0;
        for (i, &p) in ech.pivots.iter().enumerate() {
            basis[(f, p)] = ech.g1[(i, f)];
        }
    }
    basis
}

fn least_squares(m: &Matrix, rhs: &Vector) -> Vector {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vector::zeros(m.ncols());
    }
    let scale = m.amax().max(1.0);
    m.clone().svd(true, true).solve(rhs, 1e-12 * scale).unwrap_or_else(|_| Vector::zeros(m.ncols()))
}

impl SubvectorProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(b: Matrix, c: Matrix, d: Vector, mean: Vector, variance: Matrix, n: usize, alpha: f64) -> Result<Self> {
        validate_alpha(alpha)?;
        let k = b.nrows();
        if k == 0 {
            return Err(Error::Argument("at least one inequality is required".into()));
        }
        if c.nrows() != k || d.len() != k {
            return Err(Error::Dimension(format!(
                "B has {k} rows, C has {}, d has {} entries",
                c.nrows(),
                d.len()
            )));
        }
        if c.ncols() == 0 {
            return Err(Error::Argument("the nuisance parameter needs at least one column in C".into()));
        }
        if mean.len() != b.ncols() {
            return Err(Error::Dimension(format!("moment mean has {} entries, B has {} columns", mean.len(), b.ncols())));
        }
        if n == 0 {
            return Err(Error::Argument("sample size must be positive".into()));
        }
        for (name, v) in [("B", b.as_slice()), ("C", c.as_slice()), ("d", d.as_slice()), ("moment mean", mean.as_slice())] {
            crate::linalg::ensure_finite(name, v)?;
        }
        let variance = validate_covariance("conditional variance", &variance, mean.len())?;
        Ok(Self { b, c, d, mean, variance, n, alpha })
    }

    /// Moments given observation by observation, with the conditional
    /// variance estimated according to `mode`.
    pub fn from_data(
        data: &Matrix,
        b: Matrix,
        c: Matrix,
        d: Vector,
        mode: &ConditionalVarianceMode,
        alpha: f64,
    ) -> Result<Self> {
        let variance = mode.estimate(data)?;
        Self::new(b, c, d, column_means(data), variance, data.nrows(), alpha)
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    fn effective_variance(&self, settings: &Settings) -> Matrix {
        apply_ridge(&self.variance, settings.ridge)
    }

    /// `T = min n (m̄ - μ)ᵀ Σ̂⁻¹ (m̄ - μ)` over `{(μ, δ) : B μ - C δ <= d}`.
    pub fn compute_statistic(&self, settings: &Settings) -> Result<SubStatistic> {
        settings.validate()?;
        let tol = &settings.tolerances;
        let metric = self.effective_variance(settings) / self.n as f64;
        let (mu, delta, lambda) = joint_projection(&self.mean, &metric, &self.b, &self.c, &self.d, settings)?;
        let l = cholesky_factor(&metric, tol.tol_rank)?;
        let value = forward_substitute(&l, &(&self.mean - &mu)).norm_squared();
        let value = if value <= tol.tol_zero_statistic { 0.0 } else { value };

        let mut slack = &self.b * &mu - &self.c * &delta - &self.d;
        for i in 0..slack.len() {
            if slack[i].abs() <= tol.tol_active * (1.0 + self.d[i].abs()) {
                slack[i] = 0.0;
            }
        }
        let kkt = joint_kkt_residual(&self.mean, &metric, &self.b, &self.c, &self.d, &mu, &delta, &lambda, tol)?;
        Ok(SubStatistic {
            value,
            restricted_estimate: mu,
            nuisance_estimate: delta,
            slack,
            multipliers: lambda,
            kkt_residual: kkt,
        })
    }

    /// Rank of the active part of the eliminated system, computed through
    /// implicit equalities and the parametric form of the active cone.
    pub fn compute_rank(&self, stat: &SubStatistic, settings: &Settings) -> Result<(usize, Vec<usize>)> {
        let tol = &settings.tolerances;
        if stat.value == 0.0 {
            return Ok((0, Vec::new()));
        }
        let k = self.k();
        let implicit = detect_implicit_equalities(&self.c, &stat.slack, tol)?;
        let mut pinned = Matrix::zeros(implicit.len(), k);
        for (r, &j) in implicit.iter().enumerate() {
            pinned[(r, j)] = 1.0;
        }
        let ct = normalize_rows(&self.c.transpose());
        let vt = normalize_rows(&Matrix::from_row_slice(1, k, stat.slack.as_slice()));
        let e = vstack(&[&pinned, &ct, &vt]);
        let rank_e = matrix_rank(&e, tol.tol_rank);
        if matrix_rank(&self.b, tol.tol_rank) == k {
            return Ok((k - rank_e, implicit));
        }
        let ech = reduced_row_echelon(&e, tol.tol_rank);
        if ech.free.is_empty() {
            return Ok((0, implicit));
        }
        let core = self.b.select_rows(&ech.free);
        let expressed = if ech.pivots.is_empty() {
            core
        } else {
            ech.g1.transpose() * self.b.select_rows(&ech.pivots) + core
        };
        Ok((matrix_rank(&expressed, tol.tol_rank), implicit))
    }

    /// Run the subvector test. `Variant::Cc` is the plain version and
    /// `Variant::Rcc` the refined one; the vertex enumeration needed by the
    /// refinement is cached in `cache` when one is supplied.
    pub fn run_test(&self, variant: Variant, settings: &Settings, cache: Option<&VertexCache>) -> Result<TestOutcome> {
        let stat = self.compute_statistic(settings)?;
        let (rank, implicit) = self.compute_rank(&stat, settings)?;
        let sigma = self.effective_variance(settings);
        let mut vertices = None;
        let mut notes = Vec::new();
        let decision = decide(stat.value, rank, self.alpha, variant, || {
            let sys = eliminate_nuisance(&self.b, &self.c, &self.d, settings, cache)?;
            vertices = Some(sys.h.nrows());
            if sys.h.nrows() == 0 {
                return Err(Error::Invariant("positive statistic with an empty elimination polytope".into()));
            }
            let spec = sys.spec()?;
            let mut active = active_set(&spec, &stat.restricted_estimate, settings.tolerances.tol_active);
            if active.is_empty() {
                let gap = &spec.b - &spec.a * &stat.restricted_estimate;
                let nearest = (0..spec.n_constraints())
                    .min_by(|&i, &j| {
                        let gi = gap[i].abs() / (1.0 + spec.b[i].abs());
                        let gj = gap[j].abs() / (1.0 + spec.b[j].abs());
                        gi.total_cmp(&gj)
                    })
                    .unwrap_or(0);
                notes.push(format!("no eliminated row within tolerance; used nearest row {nearest}"));
                active.push(nearest);
            }
            compute_tau(&spec, &stat.restricted_estimate, &sigma, self.n, &active, settings.tolerances.tol_rank)
        })?;
        let active: Vec<usize> = (0..self.k()).filter(|&i| stat.slack[i] == 0.0).collect();
        Ok(TestOutcome {
            variant,
            statistic: stat.value,
            restricted_estimate: stat.restricted_estimate.iter().copied().collect(),
            nuisance_estimate: Some(stat.nuisance_estimate.iter().copied().collect()),
            active_set: active,
            r_hat: rank,
            tau_hat: decision.tau,
            beta_hat: decision.beta,
            critical_value: decision.critical_value,
            reject: decision.reject,
            diagnostics: Diagnostics {
                kkt_residual: stat.kkt_residual,
                ridge_applied: settings.ridge,
                vertices,
                implicit_equalities: Some(implicit),
                notes,
            },
        })
    }
}

/// Projection of `mean` onto `{μ : ∃δ, B μ - C δ <= d}` in the metric
/// `metric⁻¹`, returning `(μ̂, δ̂, λ)`.
///
/// A small proximal term `ε ‖δ - δ₀‖²` makes the joint problem strictly
/// convex; `δ₀` is recentred at the previous solution until the active set
/// settles, and the result is then polished by solving the exact
/// equality-constrained problem on that active set.
pub(crate) fn joint_projection(
    mean: &Vector,
    metric: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Vector,
    settings: &Settings,
) -> Result<(Vector, Vector, Vector)> {
    let tol = &settings.tolerances;
    let dm = mean.len();
    let p = c.ncols();
    let k = b.nrows();
    let l = cholesky_factor(metric, tol.tol_rank)?;
    let mut linv_sq = 0.0;
    for j in 0..dm {
        let mut e = Vector::zeros(dm);
        e[j] = 1.0;
        linv_sq += forward_substitute(&l, &e).norm_squared();
    }
    let eps = settings.delta_ridge * linv_sq;
    let s = 1.0 / eps.sqrt();

    let mut normals = Matrix::zeros(k, dm + p);
    normals.view_mut((0, 0), (k, dm)).copy_from(&(b * &l));
    normals.view_mut((0, dm), (k, p)).copy_from(&(-c * s));
    let target_mu = forward_substitute(&l, mean);

    let mut delta0 = least_squares(c, &(b * mean - d));
    let mut previous_active: Option<Vec<usize>> = None;
    let mut mu = mean.clone();
    let mut delta = delta0.clone();
    let mut lambda = Vector::zeros(k);
    for _ in 0..50 {
        let mut target = Vector::zeros(dm + p);
        target.rows_mut(0, dm).copy_from(&target_mu);
        target.rows_mut(dm, p).copy_from(&(&delta0 / s));
        let (y, lam) = crate::linalg::project_whitened(&target, &normals, d)?;
        mu = &l * y.rows(0, dm);
        delta = y.rows(dm, p) * s;
        lambda = lam;
        let slack = b * &mu - c * &delta - d;
        let active: Vec<usize> = (0..k).filter(|&i| slack[i].abs() <= tol.tol_active * (1.0 + d[i].abs())).collect();
        let moved = (&delta - &delta0).amax() <= 1e-12 * (1.0 + delta0.amax());
        let settled = previous_active.as_ref() == Some(&active);
        delta0 = delta.clone();
        previous_active = Some(active);
        if moved || settled {
            break;
        }
    }

    if let Some(active) = previous_active {
        if let Some(polished) = polish(mean, metric, b, c, d, &delta, &active, tol) {
            return Ok(polished);
        }
    }
    Ok((mu, delta, lambda))
}

/// Exact solution on a fixed active set, accepted only when it is feasible
/// with nonnegative multipliers (and therefore optimal).
#[allow(clippy::too_many_arguments)]
fn polish(
    mean: &Vector,
    metric: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Vector,
    delta_start: &Vector,
    active: &[usize],
    tol: &Tolerances,
) -> Option<(Vector, Vector, Vector)> {
    let k = b.nrows();
    let (mu, lambda_active) = if active.is_empty() {
        (mean.clone(), Vector::zeros(0))
    } else {
        let c_j = c.select_rows(active);
        let b_j = b.select_rows(active);
        let d_j = d.select_rows(active);
        let null = left_null_basis(&c_j, tol.tol_rank);
        if null.nrows() == 0 {
            (mean.clone(), Vector::zeros(active.len()))
        } else {
            let g = &null * &b_j;
            let rhs = &null * &d_j;
            let gram = &g * metric * g.transpose();
            let scale = gram.amax().max(f64::MIN_POSITIVE);
            let nu = gram.svd(true, true).solve(&(&g * mean - rhs), 1e-12 * scale).ok()?;
            let mu = mean - metric * g.transpose() * &nu;
            (mu, null.transpose() * nu)
        }
    };
    let mut lambda = Vector::zeros(k);
    for (pos, &i) in active.iter().enumerate() {
        lambda[i] = lambda_active[pos];
    }
    let lmax = lambda.amax().max(1.0);
    if lambda.iter().any(|&x| x < -1e-9 * lmax) {
        return None;
    }
    let delta = if active.is_empty() {
        delta_start.clone()
    } else {
        let c_j = c.select_rows(active);
        let gap = b.select_rows(active) * &mu - d.select_rows(active) - &c_j * delta_start;
        delta_start + least_squares(&c_j, &gap)
    };
    let slack = b * &mu - c * &delta - d;
    for i in 0..k {
        if slack[i] > tol.tol_feas * (1.0 + d[i].abs()) {
            return None;
        }
    }
    Some((mu, delta, lambda.map(|x| x.max(0.0))))
}

/// Largest violation of the optimality conditions of the un-ridged joint
/// problem, with stationarity measured in whitened coordinates.
#[allow(clippy::too_many_arguments)]
fn joint_kkt_residual(
    mean: &Vector,
    metric: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Vector,
    mu: &Vector,
    delta: &Vector,
    lambda: &Vector,
    tol: &Tolerances,
) -> Result<f64> {
    let l = cholesky_factor(metric, tol.tol_rank)?;
    // L⁻¹(m̄ - μ) = Lᵀ Bᵀ λ
    let lhs = forward_substitute(&l, &(mean - mu));
    let rhs = l.transpose() * b.transpose() * lambda;
    let mut worst = (lhs - rhs).amax();
    worst = worst.max((c.transpose() * lambda).amax() * l.amax());
    let slack = b * mu - c * delta - d;
    for i in 0..slack.len() {
        worst = worst.max(slack[i]).max(-lambda[i]).max((lambda[i] * slack[i]).abs());
    }
    Ok(worst)
}
